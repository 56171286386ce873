from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Device',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(max_length=100, unique=True)),
                ('description', models.TextField(blank=True, default='')),
                ('r_series', models.FloatField(blank=True, null=True)),
                ('latest_state', models.FloatField(blank=True, null=True)),
                ('mean_state', models.FloatField(blank=True, null=True)),
                ('drift_rate', models.FloatField(blank=True, null=True)),
                ('reading_count', models.IntegerField(default=0)),
            ],
        ),
        migrations.CreateModel(
            name='FitRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('gmss', 'Generalised MSS'), ('modified_gmss', 'Modified generalised MSS'), ('proposed', 'Proposed state-dependent model')], max_length=20)),
                ('g_m', models.FloatField()),
                ('alpha1', models.FloatField()),
                ('alpha2', models.FloatField()),
                ('beta1', models.FloatField()),
                ('beta2', models.FloatField()),
                ('states', models.JSONField(default=list)),
                ('loss_history', models.JSONField(default=list)),
                ('metrics', models.JSONField(default=dict)),
                ('loss', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('device', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='fit_runs', to='memstate.device')),
            ],
        ),
        migrations.CreateModel(
            name='StateReading',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('t', models.FloatField(default=0)),
                ('x_hat', models.FloatField()),
                ('inv_x_hat', models.FloatField(blank=True, null=True)),
                ('variance_proxy', models.FloatField()),
                ('n_included', models.IntegerField(default=0)),
                ('n_excluded', models.IntegerField(default=0)),
                ('recorded_at', models.DateTimeField(auto_now_add=True)),
                ('device', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='readings', to='memstate.device')),
                ('fit_run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='readings', to='memstate.fitrun')),
            ],
            options={
                'ordering': ['t', 'id'],
            },
        ),
    ]
