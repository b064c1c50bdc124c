# core/models.py

from django.conf import settings
from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('passed', 'Passed'),
        ('failed', 'Failed'),
        ('error', 'Error'),
    ]

    subcommand = models.CharField(max_length=20)
    config = models.JSONField(default=dict, blank=True, help_text="Validated experiment configuration")
    config_hash = models.CharField(max_length=64, blank=True, db_index=True)
    artifact_version = models.CharField(
        max_length=20,
        default=getattr(settings, 'IDS_ARTIFACT_VERSION', '1.0'),
    )
    output_dir = models.CharField(max_length=500, blank=True)
    workers = models.PositiveIntegerField(default=1)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='running')

    # Flexible per-stage status and error flags (eigensolver, padding, checks...)
    status_flags = models.JSONField(default=dict, blank=True)
    manifest = models.JSONField(default=dict, blank=True, help_text="Artifact files and their SHA-256 hashes")

    created = models.DateTimeField(default=timezone.now)
    finished = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created']

    def __str__(self):
        return f"{self.subcommand} {self.config_hash[:12]} ({self.get_status_display()})"

    def log_status_flag(self, key, error_message=None):
        """Set `key` with the error and its time, or clear it when there is no error."""
        flags = self.status_flags.copy() if self.status_flags else {}

        if error_message:
            flags[key] = True
            flags[f"{key}_last_error"] = error_message
            flags[f"{key}_last_error_time"] = timezone.now().isoformat()
        else:
            flags[key] = False
            flags.pop(f"{key}_last_error", None)
            flags.pop(f"{key}_last_error_time", None)

        # Reassign so the JSONField change is saved
        self.status_flags = flags
        if self.pk:
            self.save(update_fields=["status_flags"])

    def finish(self, status, manifest=None):
        self.status = status
        self.finished = timezone.now()
        if manifest is not None:
            self.manifest = manifest
        if self.pk:
            self.save(update_fields=["status", "finished", "manifest"])
