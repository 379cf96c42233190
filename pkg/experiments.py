"""
Experiment Runner
Orchestrates emission traces, field snapshots, pole maps, disorder sweeps,
phase sweeps and curve fits, and writes their data, plots and manifests
"""

import math
import logging
from pathlib import Path
from typing import Callable, Dict, Any, List, Optional

import numpy as np
import pandas as pd

from models import GiantAtomError, to_caption
from disorder import sample_configuration
from emission import (
    field_norm, field_snapshot, integrate_emission
)
from spectral import dark_poles, default_window, find_poles, pole_table
from dfi import phi_sweep
from analysis import (
    AnalysisError, FitModel, FitResult, SweepResult, dde_extractor, disorder_sweep,
    extract_kappa_min, fit_debye2, fit_power_law, fitted_tail_mean, kappa_tot_extractor,
    pole_extractor, tail_mean
)
from settings import Axis, ExperimentConfig, ExperimentConfigError, TOOLKIT_VERSION
from services.export import (
    ResultWriter, eigenvalue_frame, field_frame, read_sweep, trajectory_frame
)
from services import plotting

logger = logging.getLogger(__name__)

EMIT_DURATION = 100.0
FIELD_DURATION = 20.0
SIGMA_AXIS = Axis(min=0.0, max=0.05, count=11)
PHI_AXIS = Axis(min=0.0, max=2.0 * math.pi, count=512)


class ExperimentRunner:
    """Runs one configured experiment and writes its artifacts"""

    def __init__(self, config: ExperimentConfig, output_dir: Path):
        self.config = config
        stem = config.output.get('stem') or config.kind.replace('-', '_')
        self.writer = ResultWriter(output_dir, stem)
        self.summary: Dict[str, Any] = {}
        self._handlers: Dict[str, Callable[[], None]] = {
            'emit': self.run_emit,
            'field': self.run_field,
            'poles': self.run_poles,
            'sweep-dark': self.run_sweep_dark,
            'sweep-dfi': self.run_sweep_dfi,
            'phi-sweep': self.run_phi_sweep,
            'fit': self.run_fit,
        }

    def run(self) -> List[Path]:
        kind = self.config.kind
        logger.info(f"running {kind} experiment (seed={self.config.seed})")
        try:
            self._handlers[kind]()
        except GiantAtomError as e:
            logger.error(f"{kind} experiment failed: {e}")
            raise
        if self.summary:
            self.writer.write_json(self.summary, 'summary')
        self.writer.write_manifest(self.config.resolved(), self.config.overrides,
                                   TOOLKIT_VERSION, self.config.source)
        return list(self.writer.written)

    # emission

    def run_emit(self):
        cfg = self.config
        ideal = cfg.emitter_config()
        curves = {'ideal': ideal, 'disordered': cfg.segmented_config(ideal)}
        spec = cfg.disorder_spec()
        if not spec.is_clean:
            curves['sampled'] = sample_configuration(ideal, spec, 0)

        t_max = cfg.emission['t_max'] or EMIT_DURATION
        trajectories = {name: integrate_emission(c, t_max, cfg.emission['dt']) for name, c in curves.items()}
        # one shared grid for the overlay table
        dt = min(t.dt for t in trajectories.values())
        for name, trajectory in trajectories.items():
            if trajectory.dt != dt:
                trajectories[name] = integrate_emission(curves[name], t_max, dt)

        times = trajectories['ideal'].times
        overlay = pd.DataFrame({'t': times})
        for name, trajectory in trajectories.items():
            overlay[f'abs_beta2_{name}'] = trajectory.probability()
        self.writer.write_csv(overlay)
        for name, trajectory in trajectories.items():
            self.writer.write_csv(trajectory_frame(times, trajectory.lab_amplitudes()), f'trajectory_{name}')

        self.summary['configs'] = {name: c.to_dict() for name, c in curves.items()}
        self.summary['final_abs_beta2'] = {name: float(t.probability()[-1]) for name, t in trajectories.items()}
        rates = {}
        for name, trajectory in trajectories.items():
            try:
                rates[name] = extract_kappa_min(trajectory, cfg.emission['t1'], cfg.emission['t2']).kappa
            except AnalysisError as e:
                logger.warning(f"no rate for the {name} curve: {e}")
        self.summary['kappa_min'] = rates

        self.writer.record(plotting.line_plot(
            self.writer.path('', 'svg'), times,
            {name: t.probability() for name, t in trajectories.items()},
            xlabel='t / tau', ylabel='|beta(t)|^2',
        ))

    def run_field(self):
        cfg = self.config
        config = cfg.emitter_config()
        t_max = cfg.emission['t_max'] or FIELD_DURATION
        trajectory = integrate_emission(config, t_max, cfg.emission['dt'])
        times = cfg.field['times'] or [0.25 * t_max, 0.5 * t_max, t_max]
        if max(times) > trajectory.end:
            raise ExperimentConfigError(f"snapshot time {max(times)} beyond t_max {trajectory.end:.6g}",
                                        field='field.times')
        dx = cfg.field['dx'] or 0.5 * trajectory.dt

        ledger = []
        snapshot = None
        for k, t in enumerate(times):
            grid = np.arange(config.positions[0] - t, config.positions[-1] + t + 0.5 * dx, dx)
            snapshot = field_snapshot(config, trajectory, t, grid)
            self.writer.write_csv(field_frame(snapshot), f'snapshot_{k + 1}')
            atom = float(np.abs(trajectory.at(t)) ** 2)
            emitted = field_norm(config, trajectory, t)
            ledger.append({'t': t, 'abs_beta2': atom, 'field_norm': emitted, 'total': atom + emitted})
        norm = pd.DataFrame(ledger, columns=['t', 'abs_beta2', 'field_norm', 'total'])
        self.writer.write_csv(norm, 'norm')
        self.summary['max_norm_deviation'] = float(np.abs(norm['total'] - 1.0).max())

        self.writer.record(plotting.line_plot(
            self.writer.path('', 'svg'), snapshot.grid, {f't={snapshot.time:g}': snapshot.intensity},
            xlabel='x / v tau', ylabel='|Phi(x,t)|^2',
        ))

    # spectra

    def run_poles(self):
        cfg = self.config
        config = cfg.emitter_config()
        window = cfg.search_window(config, default_window(config))
        poles = find_poles(config, window, cfg.seed_grid)
        self.writer.write_csv(pd.DataFrame(pole_table(poles)))
        self.summary.update({
            'omega_tau_2pi': to_caption(config.omega_tau),
            'count': len(poles),
            'winding': poles.winding,
            'consistent': poles.consistent,
            'kappa_min': float(poles.kappas.min()) if len(poles) else None,
            'dark_count': int(dark_poles(poles).size),
            'window': window.to_dict(),
        })
        self.writer.record(plotting.pole_map(
            self.writer.path('', 'svg'), poles.poles,
            title=f'N={config.n_points}, Omega tau/2pi={to_caption(config.omega_tau):.4g}',
        ))

    def run_phi_sweep(self):
        cfg = self.config
        axis = cfg.axis('phi0', PHI_AXIS)
        grid = axis.values()
        b = cfg.braided
        eigenvalues = phi_sweep(b['gamma0'], grid, b['omega_a'], b['omega_b'])
        self.writer.write_csv(eigenvalue_frame(grid, eigenvalues))
        self.summary['max_re_lambda'] = float(eigenvalues.real.max())
        nearest = int(np.argmin(np.abs(grid - math.pi / 2)))
        self.summary['max_abs_re_lambda_near_dfi'] = {
            'phi0': float(grid[nearest]),
            'value': float(np.abs(eigenvalues[nearest].real).max()),
        }
        for part, label in (('real', 'Re'), ('imag', 'Im')):
            values = getattr(eigenvalues, part)
            self.writer.record(plotting.line_plot(
                self.writer.path(part, 'svg'), grid,
                {f'{label} lambda_{j + 1}': values[:, j] for j in range(values.shape[1])},
                xlabel='phi0', ylabel=f'{label} lambda', legend=False,
            ))

    # disorder sweeps

    def _extractor(self):
        cfg = self.config
        if cfg.analysis['extractor'] == 'dde':
            em = cfg.emission
            return dde_extractor(em['t_max'], em['dt'], em['t1'], em['t2'])
        return pole_extractor(grid=cfg.seed_grid)

    def _sweep(self, base, extractor) -> SweepResult:
        cfg = self.config
        sigma_g = cfg.axis('sigma_g', SIGMA_AXIS).values()
        sigma_x = cfg.axis('sigma_x', SIGMA_AXIS).values()
        return disorder_sweep(base, sigma_g, sigma_x, cfg.samples, cfg.seed, extractor,
                              threads=cfg.threads, min_separation=cfg.disorder['min_separation'])

    def _varying_axis(self, frame: pd.DataFrame) -> Optional[str]:
        varying = [name for name in ('sigma_g', 'sigma_x') if frame[name].nunique() > 1]
        return varying[0] if len(varying) == 1 else None

    def _fits(self, frame: pd.DataFrame, axis: str, column: str) -> List[FitResult]:
        points = frame[[axis, column]].to_numpy(dtype=float)
        wanted = self.config.analysis['fit']
        fitters = {FitModel.POWER_LAW: fit_power_law, FitModel.DEBYE2: fit_debye2}
        results = []
        for model, fitter in fitters.items():
            if wanted not in ('both', model.value):
                continue
            try:
                result = fitter(points)
            except AnalysisError as e:
                logger.warning(f"{model.value} fit skipped: {e}")
                continue
            results.append(result)
            entry = {'params': result.params, 'residual': result.residual, 'converged': result.converged}
            if len(points) >= 3:
                entry['fitted_tail_mean'] = fitted_tail_mean(result, points)
            self.summary.setdefault('fits', {})[model.value] = entry
        return results

    def _fit_plot(self, suffix: str, frame: pd.DataFrame, axis: str, column: str, label: str,
                  fits: List[FitResult]):
        positive = frame[(frame[axis] > 0) & (frame[column] > 0)].sort_values(axis)
        sigma = positive[axis].to_numpy()
        self.writer.record(plotting.line_plot(
            self.writer.path(suffix, 'svg'), sigma, {label: positive[column].to_numpy()},
            xlabel=axis, ylabel=label, logx=True, logy=True,
            fits={f'{fit.model.value} fit': fit.predict(sigma) for fit in fits},
        ))

    def _sweep_outputs(self, result: SweepResult, column: str, label: str):
        frame = result.table
        axis = self._varying_axis(frame)
        fits = self._fits(frame, axis, column) if axis else []
        self.writer.write_csv(frame, footer=[fit.as_row() for fit in fits] or None)
        self.writer.write_csv(result.samples, 'samples')
        if frame['sigma_g'].nunique() > 1 and frame['sigma_x'].nunique() > 1:
            self.writer.record(plotting.heatmap(self.writer.path('', 'svg'), frame, column, title=label))
        elif axis:
            self._fit_plot('', frame, axis, column, label, fits)

    def run_sweep_dark(self):
        result = self._sweep(self.config.emitter_config(), self._extractor())
        self.summary['failed_samples'] = int(result.table['n_failed'].sum())
        self._sweep_outputs(result, 'kappa_mean', 'mean kappa_min')

    def run_sweep_dfi(self):
        result = self._sweep(self.config.braided_config(), kappa_tot_extractor())
        frame = result.table.rename(columns={'kappa_mean': 'kappa_tot_mean', 'kappa_stderr': 'kappa_tot_stderr'})
        result.table = frame[['sigma_g', 'sigma_x', 'kappa_tot_mean', 'kappa_tot_stderr']]
        self._sweep_outputs(result, 'kappa_tot_mean', 'mean kappa_tot')

    # fitting

    def run_fit(self):
        cfg = self.config
        source = cfg.analysis['data']
        if not source:
            raise ExperimentConfigError("fit needs a sweep CSV (analysis.data or --data)", field='analysis.data')
        if not Path(source).is_file():
            raise ExperimentConfigError(f"sweep CSV {source} does not exist", field='analysis.data')
        frame = read_sweep(source)
        column = next((c for c in ('kappa_mean', 'kappa_tot_mean') if c in frame.columns), None)
        if column is None:
            raise ExperimentConfigError(f"{source} has no kappa_mean or kappa_tot_mean column", field='analysis.data')
        axis = cfg.analysis['axis'] or self._varying_axis(frame)
        if axis is None or axis not in frame.columns:
            raise ExperimentConfigError("cannot tell which sigma column varies; set analysis.axis",
                                        field='analysis.axis')

        fits = self._fits(frame, axis, column)
        if not fits:
            raise AnalysisError(f"no model could be fitted to {source}")
        rows = [fit.as_row() for fit in fits]
        self.writer.write_csv(pd.DataFrame(rows, columns=['model', 'param1', 'param2', 'residual']), 'fit')
        self._fit_plot('fit', frame, axis, column, column, fits)

        points = frame[[axis, column]].to_numpy(dtype=float)
        self.summary['data'] = str(source)
        self.summary['axis'] = axis
        if len(rows) == 2:
            self.summary['best'] = min(rows, key=lambda row: row['residual'])['model']
        if len(points) >= 3:
            self.summary['tail_mean'] = tail_mean(points)
