# core/reports.py

import csv
import logging
from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

HASH_PREFIX = '# config_hash='

# column -> (plain English, units / choices, note)
COLUMN_DICTIONARY = {
    'scale': ('Følner scale index n', '0, 1, 2, ...', '0 is the smallest box'),
    'volume': ('|I_n|·|D|, the normalizing volume', 'sites', None),
    'lambda': ('Energy λ', 'real', 'Grid point'),
    'mean': ('Seed mean of N_ω^n(λ)', '[0, 1]', 'Left-continuous: eigenvalues < λ'),
    'std': ('Seed standard deviation of N_ω^n(λ)', '≥ 0', 'ddof = 1'),
    'rho': ('Mean of tr(χ_D E(]-∞, λ[)) over seeds', '[0, |D|]', 'Not divided by |D|'),
    'stderr': ('Standard error of the seed mean', '≥ 0', None),
    'ids': ('Largest-scale mean IDS', '[0, 1]', None),
    'dos': ('Abstract DOS divided by the normalization', '[0, 1]', '|D| or τ(Id)'),
    'gap': ('Absolute difference of the two routes', '≥ 0', None),
    'admitted': ('Grid point used for the maximum gap', 'True | False', 'False next to heavy jumps'),
    't': ('Heat-kernel time', '> 0', None),
    'deviation': ('Boundary deviation per site', '≥ 0', 'Max over seeds'),
    'a': ('Interval lower end', 'real', 'Open interval'),
    'b': ('Interval upper end', 'real', 'Open interval'),
    'mean_count': ('Mean eigenvalue count in (a, b)', '≥ 0', None),
    'location': ('Atom location', 'real', None),
    'weight': ('Atom weight per lattice site', '≥ 0', None),
    'predicted': ('Cluster-oracle weight', '≥ 0', 'Lower bound for the jump'),
    'upper': ('Upper bound for the jump at 0', '≥ 0', 'Oracle total plus slack; empty elsewhere'),
    'empirical': ('Seed mean of the IDS jump', '≥ 0', None),
    'passed': ('Row passes its check', 'True | False', None),
    'x': ('First coordinate', 'real', None),
    'y': ('Second coordinate', 'real', None),
    'i': ('First point index', 'integer', 'i < j'),
    'j': ('Second point index', 'integer', None),
}


def read_artifact_csv(path):
    """(config_hash, columns, rows) of a CSV artifact; numeric cells become floats."""
    config_hash = None
    with open(path, newline='', encoding='utf-8') as handle:
        lines = []
        for line in handle:
            if line.startswith(HASH_PREFIX):
                config_hash = line[len(HASH_PREFIX):].strip()
            elif not line.startswith('#'):
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader, [])
    rows = []
    for record in reader:
        if not record:
            continue
        row = {}
        for name, value in zip(columns, record):
            try:
                row[name] = float(value)
            except ValueError:
                row[name] = value
        rows.append(row)
    return config_hash, columns, rows


def write_workbook(path, title, columns, rows, config_hash):
    """Data sheet plus a Dictionary sheet describing every column."""
    wb = Workbook()
    ws = wb.active
    ws.title = title[:31]

    for col_num, header in enumerate(columns, 1):
        cell = ws.cell(row=1, column=col_num)
        cell.value = header
        cell.font = Font(bold=True)
        cell.fill = PatternFill(start_color="CCCCCC", end_color="CCCCCC", fill_type="solid")
        cell.alignment = Alignment(horizontal="center")

    for row_num, row in enumerate(rows, 2):
        for col_num, value in enumerate(row, 1):
            ws.cell(row=row_num, column=col_num, value=value)

    for col in range(1, len(columns) + 1):
        ws.column_dimensions[get_column_letter(col)].width = 20

    ws_dict = wb.create_sheet("Dictionary")
    dict_headers = ['variable', 'Plain English', 'Choices', 'Note']
    for col_num, header in enumerate(dict_headers, 1):
        cell = ws_dict.cell(row=1, column=col_num)
        cell.value = header
        cell.font = Font(bold=True)

    for row_num, name in enumerate(columns, 2):
        plain, choices, note = COLUMN_DICTIONARY.get(name, (name, None, None))
        ws_dict.cell(row=row_num, column=1, value=name)
        ws_dict.cell(row=row_num, column=2, value=plain)
        ws_dict.cell(row=row_num, column=3, value=choices)
        ws_dict.cell(row=row_num, column=4, value=note)
    ws_dict.cell(row=len(columns) + 3, column=1, value='config_hash')
    ws_dict.cell(row=len(columns) + 3, column=2, value=config_hash)

    for col in range(1, len(dict_headers) + 1):
        ws_dict.column_dimensions[get_column_letter(col)].width = 30

    wb.save(path)
    return path


def _save(fig, path, config_hash):
    # Fixed ids and no timestamp, so the SVG depends on the CSV only
    with matplotlib.rc_context({'svg.hashsalt': config_hash or 'idslab'}):
        fig.savefig(path, format='svg', metadata={'Date': None, 'Description': f"config_hash={config_hash}"})
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def plot_ids(csv_path, svg_path):
    """Mean IDS ± one standard deviation, one step curve per scale."""
    config_hash, _, rows = read_artifact_csv(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for scale in sorted({int(r['scale']) for r in rows}):
        part = [r for r in rows if int(r['scale']) == scale]
        lam = [r['lambda'] for r in part]
        mean = [r['mean'] for r in part]
        low = [r['mean'] - r['std'] for r in part]
        high = [r['mean'] + r['std'] for r in part]
        ax.step(lam, mean, where='post', label=f"n={scale}, |A|={int(part[0]['volume'])}")
        ax.fill_between(lam, low, high, step='post', alpha=0.2)
    ax.set_xlabel('λ')
    ax.set_ylabel('N(λ)')
    ax.legend(loc='upper left', fontsize='small')
    return _save(fig, svg_path, config_hash)


def plot_dos(csv_path, svg_path):
    config_hash, _, rows = read_artifact_csv(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    lam = [r['lambda'] for r in rows]
    rho = [r['rho'] for r in rows]
    ax.step(lam, rho, where='post', color='black')
    ax.fill_between(
        lam, [r['rho'] - r['stderr'] for r in rows], [r['rho'] + r['stderr'] for r in rows],
        step='post', alpha=0.2,
    )
    ax.set_xlabel('λ')
    ax.set_ylabel('ρ(]-∞, λ[)')
    return _save(fig, svg_path, config_hash)


def plot_atoms(csv_path, svg_path):
    """Predicted against empirical jump weights."""
    config_hash, columns, rows = read_artifact_csv(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    lam = [r['location'] for r in rows]
    if 'predicted' in columns:
        ax.vlines(lam, 0, [r['predicted'] for r in rows], colors='tab:blue', label='cluster oracle')
        ax.errorbar(
            lam, [r['empirical'] for r in rows], yerr=[3 * r['stderr'] for r in rows],
            fmt='o', color='tab:red', markersize=3, label='empirical ± 3 s.e.',
        )
        ax.legend(fontsize='small')
    else:
        ax.vlines(lam, 0, [r['weight'] for r in rows], colors='tab:blue')
    ax.set_xlabel('λ')
    ax.set_ylabel('jump weight')
    return _save(fig, svg_path, config_hash)


PLOTTERS = {
    'ids.csv': plot_ids,
    'dos.csv': plot_dos,
    'atoms.csv': plot_atoms,
    'oracle_atoms.csv': plot_atoms,
}


def plot_directory(directory, out_dir=None):
    """SVG for every known CSV artifact in `directory`."""
    directory = Path(directory)
    out_dir = Path(out_dir) if out_dir else directory
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, plotter in PLOTTERS.items():
        source = directory / name
        if source.exists():
            written.append(plotter(source, out_dir / f"{source.stem}.svg"))
    return written
