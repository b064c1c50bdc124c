# delone/predicates.py
"""
Orientation and in-circle predicates with an exact fallback.

The floating-point determinant is trusted when its magnitude exceeds the
static error bound of Shewchuk's adaptive predicates; otherwise the
determinant is recomputed exactly with Fractions. Exactly cocircular
quadruples are resolved by a symbolic perturbation of the lifted
coordinates z_i = x_i^2 + y_i^2: point i is lifted by ε^(i+1), so the
smallest index dominates and the sign is that of the matching cofactor.
The perturbation is a generic lifting, hence it always induces a valid
triangulation.
"""

from fractions import Fraction
from itertools import combinations
import sys

EPSILON = sys.float_info.epsilon / 2
CCW_ERRBOUND_A = (3.0 + 16.0 * EPSILON) * EPSILON
ICC_ERRBOUND_A = (10.0 + 96.0 * EPSILON) * EPSILON


def _sign(value):
    return int(value > 0) - int(value < 0)


def orient2d(a, b, c):
    """+1 if a, b, c turn counterclockwise, -1 clockwise, 0 collinear (exact)."""
    detleft = (a[0] - c[0]) * (b[1] - c[1])
    detright = (a[1] - c[1]) * (b[0] - c[0])
    det = detleft - detright
    bound = CCW_ERRBOUND_A * (abs(detleft) + abs(detright))
    if abs(det) > bound:
        return _sign(det)
    return _sign(_orient2d_exact(a, b, c))


def _orient2d_exact(a, b, c):
    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (a[0], a[1], b[0], b[1], c[0], c[1]))
    return (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)


def incircle(a, b, c, d):
    """
    Sign of the in-circle determinant: for counterclockwise a, b, c it is
    +1 if d lies inside their circumcircle, -1 outside, 0 on it (exact).
    """
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]

    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    alift = adx * adx + ady * ady
    cdxady, adxcdy = cdx * ady, adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    clift = cdx * cdx + cdy * cdy

    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    if abs(det) > ICC_ERRBOUND_A * permanent:
        return _sign(det)
    return _sign(_incircle_exact(a, b, c, d))


def _lifted_rows(points):
    rows = []
    for x, y in points:
        fx, fy = Fraction(x), Fraction(y)
        rows.append((fx, fy, fx * fx + fy * fy))
    return rows


def _incircle_exact(a, b, c, d):
    (ax, ay, az), (bx, by, bz), (cx, cy, cz), (dx, dy, dz) = _lifted_rows((a, b, c, d))
    return _det3(
        (ax - dx, ay - dy, az - dz),
        (bx - dx, by - dy, bz - dz),
        (cx - dx, cy - dy, cz - dz),
    )


def _det3(r0, r1, r2):
    return (
        r0[0] * (r1[1] * r2[2] - r1[2] * r2[1])
        - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])
    )


def _det2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _lift_cofactors(a, b, c, d):
    """∂det/∂z for each of a, b, c, d in the lifted in-circle determinant."""
    (ax, ay, _), (bx, by, _), (cx, cy, _), (dx, dy, _) = _lifted_rows((a, b, c, d))
    ad, bd, cd = (ax - dx, ay - dy), (bx - dx, by - dy), (cx - dx, cy - dy)
    da = _det2(bd, cd)
    db = -_det2(ad, cd)
    dc = _det2(ad, bd)
    return da, db, dc, -(da + db + dc)


def incircle_perturbed(points, i, j, k, m):
    """
    In-circle sign for indexed points that is never zero.

    `points` is indexable by the four labels; i, j, k must be
    counterclockwise. Ties are broken by the lifting perturbation described
    in the module docstring.
    """
    a, b, c, d = points[i], points[j], points[k], points[m]
    sign = incircle(a, b, c, d)
    if sign != 0:
        return sign
    cofactors = dict(zip((i, j, k, m), _lift_cofactors(a, b, c, d)))
    for label in sorted(cofactors):
        s = _sign(cofactors[label])
        if s != 0:
            return s
    return -1


def delaunay_edges_bruteforce(points):
    """
    Delaunay edges of a small 2D point set by the empty-circumcircle test.

    O(n^4); meant as an oracle on at most ~50 points. Cocircular
    quadruples are resolved by `incircle_perturbed`.
    """
    n = len(points)
    edges = set()
    for i, j, k in combinations(range(n), 3):
        turn = orient2d(points[i], points[j], points[k])
        if turn == 0:
            continue
        a, b, c = (i, j, k) if turn > 0 else (i, k, j)
        if all(incircle_perturbed(points, a, b, c, m) < 0 for m in range(n) if m not in (i, j, k)):
            edges.update({(min(a, b), max(a, b)), (min(b, c), max(b, c)), (min(a, c), max(a, c))})
    return edges
