# Generated by Django 4.2.23 on 2026-10-19 09:12

from django.db import migrations, models
import django.utils.timezone


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('subcommand', models.CharField(max_length=20)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Validated experiment configuration')),
                ('config_hash', models.CharField(blank=True, db_index=True, max_length=64)),
                ('artifact_version', models.CharField(default='1.0', max_length=20)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('workers', models.PositiveIntegerField(default=1)),
                ('status', models.CharField(choices=[('running', 'Running'), ('passed', 'Passed'), ('failed', 'Failed'), ('error', 'Error')], default='running', max_length=10)),
                ('status_flags', models.JSONField(blank=True, default=dict)),
                ('manifest', models.JSONField(blank=True, default=dict, help_text='Artifact files and their SHA-256 hashes')),
                ('created', models.DateTimeField(default=django.utils.timezone.now)),
                ('finished', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created'],
            },
        ),
    ]
