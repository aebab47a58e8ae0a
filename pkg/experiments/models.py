from django.db import models


class ExperimentRun(models.Model):
    """One management-command invocation and where its artifacts went"""
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    ]

    command = models.CharField(max_length=50)
    seed = models.BigIntegerField(null=True, blank=True)
    config_hash = models.CharField(max_length=64, blank=True)
    output_dir = models.CharField(max_length=500)
    arguments = models.JSONField(default=dict)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at', '-id']
        indexes = [models.Index(fields=['command', 'status'], name='run_command_status_idx')]

    def __str__(self):
        return f'{self.command} #{self.pk} ({self.status})'

    @classmethod
    def latest_succeeded(cls, command):
        return cls.objects.filter(command=command, status='succeeded').order_by('-created_at', '-id').first()
