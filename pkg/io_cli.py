"""
Input loading, result export and the command-line driver.

Subcommands:
    reconstruct      run a solver on an observation and write labels, u and the trace
    synth            write a synthetic ground truth and noisy complex-pair observation
    energy           evaluate the relaxed energy of given u, D, S fields
    trace-plot-data  turn a convergence trace into a plotting-ready CSV
"""

import argparse
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union, get_args, get_origin

import numpy as np
import pandas as pd

from config import (APP_DESCRIPTION, APP_NAME, APP_VERSION, DEFAULT_DATA_POWER, DEFAULT_DATA_SCALE,
                    DEFAULT_N_THETA, DEFAULT_SMOOTHNESS, DEFAULT_SOLVER, INPUT_KINDS, OUTPUT_NAMES, SOLVERS,
                    SYNTH_DEFAULTS, SYNTH_PATTERNS)
from cylinder_grid import (CyclicScalarField, CylinderGrid, FieldFormatError, SpatialScalarField, load_field,
                           make_grid, save_field)
from data_term import (CyclicObservation, EnergyReport, build_data_term, energy, hue_from_rgb,
                       labels_to_indicator, phase_from_complex, wrap_angle)
from report import write_run_report
from solver_engine import ReconstructionResult, SolverConfig, SolverFactory
from utils import (configure_threads, format_key_value_text, grayscale_to_signed, parse_key_value_text,
                   read_grayscale_image, read_rgb_image, save_preview)

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_NOT_CONVERGED = 2

RAW_FIELD_SUFFIX = '.cyf'


class InputKindError(ValueError):
    """Raised when an input file does not match its declared kind"""


@dataclass(frozen=True)
class RunConfig:
    """Everything one reconstruction run needs; None solver values take the solver defaults"""

    input_path: str
    input_kind: str = 'complex-pair'
    input_imag_path: Optional[str] = None
    n_theta: int = DEFAULT_N_THETA
    solver: str = DEFAULT_SOLVER
    c: Optional[float] = None
    tau: Optional[float] = None
    max_iters: Optional[int] = None
    tolerance: Optional[float] = None
    log_every: Optional[int] = None
    c_anneal_factor: Optional[float] = None
    c_floor: Optional[float] = None
    power: int = DEFAULT_DATA_POWER
    scale: float = DEFAULT_DATA_SCALE
    smoothness: float = DEFAULT_SMOOTHNESS
    smoothness_map: Optional[str] = None
    output_dir: str = '.'
    labels_path: Optional[str] = None
    u_path: Optional[str] = None
    trace_path: Optional[str] = None
    preview_path: Optional[str] = None
    hue_preview: bool = False
    report_path: Optional[str] = None

    def __post_init__(self):
        if self.input_kind not in INPUT_KINDS:
            raise ValueError(f"input_kind must be one of {INPUT_KINDS}, got '{self.input_kind}'")
        if self.input_kind == 'complex-pair' and not self.input_imag_path:
            raise ValueError("complex-pair input needs input_imag_path")
        if self.n_theta < 2:
            raise ValueError(f"n_theta must be at least 2, got {self.n_theta}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got '{self.solver}'")
        if self.smoothness < 0:
            raise ValueError(f"smoothness must be nonnegative, got {self.smoothness}")
        paths = [Path(p).resolve() for p in self.input_paths() + list(self.output_paths().values())
                 if p is not None]
        if len(set(paths)) != len(paths):
            raise ValueError("Input and output paths must all be distinct")

    def input_paths(self) -> List[str]:
        return [p for p in (self.input_path, self.input_imag_path, self.smoothness_map) if p]

    def output_paths(self) -> Dict[str, Optional[str]]:
        out = Path(self.output_dir)
        return {
            'labels': self.labels_path or str(out / OUTPUT_NAMES['labels']),
            'u': self.u_path or str(out / OUTPUT_NAMES['u']),
            'trace': self.trace_path or str(out / OUTPUT_NAMES['trace']),
            'preview': self.preview_path or str(out / OUTPUT_NAMES['preview']),
            'report': self.report_path,
        }

    def solver_config(self) -> SolverConfig:
        return SolverConfig.for_solver(
            self.solver, c=self.c, tau=self.tau, max_iters=self.max_iters, tolerance=self.tolerance,
            log_every=self.log_every, c_anneal_factor=self.c_anneal_factor, c_floor=self.c_floor)

    @classmethod
    def from_settings(cls, settings: Dict[str, str]) -> 'RunConfig':
        """Build from string values (config file or CLI), converting by field type"""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(settings) - set(fields))
        if unknown:
            raise ValueError(f"Unknown run settings: {', '.join(unknown)}")
        return cls(**{key: _convert(value, fields[key].type) for key, value in settings.items()})


def _field_type(annotation) -> Tuple[type, bool]:
    """Base type of a field annotation and whether it is Optional"""
    if get_origin(annotation) is Union:
        members = [arg for arg in get_args(annotation) if arg is not type(None)]
        return members[0], len(members) < len(get_args(annotation))
    return annotation, False


def _convert(value, annotation):
    if not isinstance(value, str):
        return value
    base, optional = _field_type(annotation)
    text = value.strip()
    if optional and text.lower() in ('', 'none'):
        return None
    if base is bool:
        if text.lower() in ('1', 'true', 'yes', 'on'):
            return True
        if text.lower() in ('0', 'false', 'no', 'off'):
            return False
        raise ValueError(f"Expected a boolean, got '{value}'")
    if base is int:
        return int(text)
    if base is float:
        return float(text)
    return text


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """Read a key=value run file, then apply overrides (CLI flags win)"""
    settings = {}
    if path:
        settings.update(parse_key_value_text(Path(path).read_text(), source=str(path)))
    settings.update({key: value for key, value in (overrides or {}).items() if value is not None})
    if 'input_path' not in settings:
        raise ValueError("input_path is required")
    return RunConfig.from_settings(settings)


def _is_raw_field(path: str) -> bool:
    return Path(path).suffix.lower() == RAW_FIELD_SUFFIX


def _load_spatial_field(path: str, role: str) -> np.ndarray:
    f = load_field(path)
    if not isinstance(f, SpatialScalarField):
        raise InputKindError(f"{path}: {role} must be a spatial field, got {type(f).__name__}")
    return f.values


def load_input(cfg: RunConfig) -> CyclicObservation:
    """Build the cyclic observation for the declared input kind"""
    if cfg.input_kind == 'complex-pair':
        if _is_raw_field(cfg.input_path) != _is_raw_field(cfg.input_imag_path):
            raise InputKindError("Real and imaginary inputs must both be raw fields or both be images")
        if _is_raw_field(cfg.input_path):
            real = _load_spatial_field(cfg.input_path, 'real part')
            imag = _load_spatial_field(cfg.input_imag_path, 'imaginary part')
        else:
            try:
                real_pixels, real_bits = read_grayscale_image(cfg.input_path)
                imag_pixels, imag_bits = read_grayscale_image(cfg.input_imag_path)
            except ValueError as e:
                raise InputKindError(str(e)) from e
            if real_bits != imag_bits:
                raise InputKindError(f"Real/imaginary bit depths differ: {real_bits} vs {imag_bits}")
            real = grayscale_to_signed(real_pixels, real_bits)
            imag = grayscale_to_signed(imag_pixels, imag_bits)
        if real.shape != imag.shape:
            raise ValueError(f"Real/imaginary shapes differ: {real.shape} vs {imag.shape}")
        return phase_from_complex(real, imag, n_theta=cfg.n_theta)

    if cfg.input_kind == 'rgb':
        if _is_raw_field(cfg.input_path):
            raise InputKindError(f"{cfg.input_path}: rgb input must be an image file")
        try:
            pixels = read_rgb_image(cfg.input_path)
        except ValueError as e:
            raise InputKindError(str(e)) from e
        return hue_from_rgb(pixels[..., 0], pixels[..., 1], pixels[..., 2], n_theta=cfg.n_theta)

    if not _is_raw_field(cfg.input_path):
        raise InputKindError(f"{cfg.input_path}: raw-field input must use the {RAW_FIELD_SUFFIX} format")
    angles = _load_spatial_field(cfg.input_path, 'angle map')
    grid = make_grid(angles.shape, cfg.n_theta)
    return CyclicObservation(grid, wrap_angle(angles), np.ones(angles.shape))


def build_smoothness(cfg: RunConfig, grid: CylinderGrid) -> CyclicScalarField:
    """Constant S, or a spatial map broadcast over theta, or a full cyclic map"""
    if not cfg.smoothness_map:
        return CyclicScalarField.constant(grid, cfg.smoothness)
    f = load_field(cfg.smoothness_map)
    if f.grid.spatial_dims != grid.spatial_dims:
        raise ValueError(f"Smoothness map dims {f.grid.spatial_dims} do not match input {grid.spatial_dims}")
    if isinstance(f, SpatialScalarField):
        values = np.broadcast_to(f.values[..., None], grid.shape)
    elif isinstance(f, CyclicScalarField):
        if f.grid.n_theta != grid.n_theta:
            raise ValueError(f"Smoothness map has {f.grid.n_theta} bins, run uses {grid.n_theta}")
        values = f.values
    else:
        raise InputKindError(f"{cfg.smoothness_map}: smoothness map cannot be a flow field")
    if np.any(values < 0):
        raise ValueError("Smoothness map must be nonnegative")
    return CyclicScalarField(grid, values)


def _run_parameters(cfg: RunConfig) -> Dict:
    parameters = {key: value for key, value in dataclasses.asdict(cfg).items() if value is not None}
    parameters.update({f"solver.{key}": value for key, value in cfg.solver_config().to_dict().items()})
    return parameters


def run(cfg: RunConfig) -> ReconstructionResult:
    """Load, build D and S, solve, and write every requested output"""
    obs = load_input(cfg)
    D = build_data_term(obs, power=cfg.power, scale=cfg.scale)
    S = build_smoothness(cfg, obs.grid)
    solver_cfg = cfg.solver_config()
    logger.info("Reconstructing %s on grid %s x %d bins with solver '%s'",
                cfg.input_path, obs.grid.spatial_dims, obs.grid.n_theta, solver_cfg.solver)

    result = SolverFactory.create_solver(solver_cfg.solver, solver_cfg).solve(D, S)

    paths = cfg.output_paths()
    for key in ('labels', 'u', 'trace', 'preview', 'report'):
        if paths[key]:
            Path(paths[key]).parent.mkdir(parents=True, exist_ok=True)
    save_field(paths['labels'], result.labels)
    save_field(paths['u'], result.final_u)
    result.trace.to_csv(paths['trace'])
    save_preview(result.labels.values, paths['preview'], hue_wheel=cfg.hue_preview)
    if paths['report']:
        hard_energy = energy(labels_to_indicator(result.label_bins, obs.grid), D, S)
        write_run_report(paths['report'], result, _run_parameters(cfg), hard_energy, hue_wheel=cfg.hue_preview)
    logger.info("Wrote %s", ", ".join(str(p) for p in paths.values() if p))
    return result


@dataclass(frozen=True)
class SynthConfig:
    output_dir: str
    dims: Tuple[int, ...] = SYNTH_DEFAULTS['dims']
    pattern: str = SYNTH_DEFAULTS['pattern']
    noise: float = SYNTH_DEFAULTS['noise']
    seed: int = SYNTH_DEFAULTS['seed']
    phase_a: float = SYNTH_DEFAULTS['phase_a']
    phase_b: float = SYNTH_DEFAULTS['phase_b']
    n_theta: int = DEFAULT_N_THETA

    def __post_init__(self):
        if self.pattern not in SYNTH_PATTERNS:
            raise ValueError(f"pattern must be one of {SYNTH_PATTERNS}, got '{self.pattern}'")
        if self.noise < 0:
            raise ValueError(f"noise must be nonnegative, got {self.noise}")
        make_grid(self.dims, self.n_theta)


def synth_ground_truth(cfg: SynthConfig) -> np.ndarray:
    """Noise-free angle map in [-pi, pi)"""
    dims = tuple(cfg.dims)
    if cfg.pattern == 'two-phase':
        # Split along the last axis
        columns = np.arange(dims[-1])
        truth = np.where(columns < dims[-1] // 2, cfg.phase_a, cfg.phase_b)
        return wrap_angle(np.broadcast_to(truth, dims))
    if cfg.pattern == 'ramp':
        # One full turn across the last axis, starting at 0 so the seam falls mid-image
        columns = np.arange(dims[-1])
        return wrap_angle(np.broadcast_to(2.0 * math.pi * columns / dims[-1], dims))
    coords = np.indices(dims, dtype=np.float64)
    center = (np.array(dims, dtype=np.float64)[:, None] - 1.0) / 2.0
    radius = np.sqrt(np.sum((coords.reshape(len(dims), -1) - center) ** 2, axis=0)).reshape(dims)
    return wrap_angle(np.where(radius <= min(dims) / 4.0, cfg.phase_a, cfg.phase_b))


def synth(cfg: SynthConfig) -> Dict[str, Path]:
    """Write truth, a wrapped-Gaussian noisy complex pair, and key=value metadata"""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_grid(cfg.dims, cfg.n_theta)
    truth = synth_ground_truth(cfg)
    rng = np.random.default_rng(cfg.seed)
    observed = wrap_angle(truth + cfg.noise * rng.standard_normal(truth.shape))

    paths = {
        'truth': save_field(out / 'truth.cyf', SpatialScalarField(grid, truth)),
        'real': save_field(out / 'obs_real.cyf', SpatialScalarField(grid, np.cos(observed))),
        'imag': save_field(out / 'obs_imag.cyf', SpatialScalarField(grid, np.sin(observed))),
    }
    metadata = {
        'pattern': cfg.pattern,
        'dims': ','.join(str(d) for d in cfg.dims),
        'noise': repr(float(cfg.noise)),
        'seed': cfg.seed,
        'phase_a': repr(float(cfg.phase_a)),
        'phase_b': repr(float(cfg.phase_b)),
        'noise_model': 'wrapped-gaussian',
    }
    paths['metadata'] = out / 'synth_meta.txt'
    paths['metadata'].write_text(format_key_value_text(metadata))
    logger.info("Synthesized %s pattern %s (noise %g, seed %d) in %s", cfg.pattern, cfg.dims, cfg.noise, cfg.seed, out)
    return paths


def evaluate_energy(u_path: str, d_path: str, s_path: str) -> EnergyReport:
    """Energy of stored fields; S may be spatial (broadcast over theta) or cyclic"""
    u = load_field(u_path)
    D = load_field(d_path)
    S = load_field(s_path)
    if not isinstance(u, CyclicScalarField) or not isinstance(D, CyclicScalarField):
        raise InputKindError("u and D must be cyclic fields")
    if isinstance(S, SpatialScalarField):
        if S.grid.spatial_dims != u.grid.spatial_dims:
            raise ValueError(f"S dims {S.grid.spatial_dims} do not match u {u.grid.spatial_dims}")
        S = CyclicScalarField(u.grid, np.broadcast_to(S.values[..., None], u.grid.shape))
    elif not isinstance(S, CyclicScalarField):
        raise InputKindError("S must be a spatial or cyclic field")
    return energy(u, D, S)


def trace_plot_data(trace: pd.DataFrame) -> pd.DataFrame:
    """Iteration and energy plus log10 of every residual-type column"""
    plot = trace[['iteration', 'energy']].copy()
    for column in trace.columns:
        if column in ('iteration', 'energy'):
            continue
        plot[f"log10_{column}"] = np.log10(np.maximum(trace[column].abs().to_numpy(), 1e-300))
    return plot


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 like every other failure"""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"❌ {message}", file=sys.stderr)
        sys.exit(EXIT_FAILURE)


_RUN_FLAGS = [
    ('input', 'input_path', str, "real part image/field, RGB image, or raw angle field"),
    ('imag', 'input_imag_path', str, "imaginary part image/field for complex-pair input"),
    ('kind', 'input_kind', str, f"one of {', '.join(INPUT_KINDS)}"),
    ('n-theta', 'n_theta', int, "number of cyclic bins"),
    ('solver', 'solver', str, f"one of {', '.join(SOLVERS)}"),
    ('c', 'c', float, "augmentation / proximal weight"),
    ('tau', 'tau', float, "flow step size"),
    ('max-iters', 'max_iters', int, "iteration limit"),
    ('tolerance', 'tolerance', float, "stopping threshold"),
    ('log-every', 'log_every', int, "trace and log interval"),
    ('c-anneal-factor', 'c_anneal_factor', float, "pseudo-flow c decay per iteration (1 = off)"),
    ('c-floor', 'c_floor', float, "lower bound for annealed c"),
    ('power', 'power', int, "data-term distance power (1 or 2)"),
    ('scale', 'scale', float, "data-term scale"),
    ('smoothness', 'smoothness', float, "constant smoothness S"),
    ('smoothness-map', 'smoothness_map', str, "raw field with S (spatial or cyclic)"),
    ('output-dir', 'output_dir', str, "directory for default output names"),
    ('labels-out', 'labels_path', str, "label map output (raw field)"),
    ('u-out', 'u_path', str, "final u output (raw field)"),
    ('trace-out', 'trace_path', str, "convergence trace CSV"),
    ('preview-out', 'preview_path', str, "8-bit PNG preview"),
    ('report-out', 'report_path', str, "optional .docx run report"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='cyclic-flow', description=f"{APP_NAME} v{APP_VERSION}: {APP_DESCRIPTION}")
    parser.add_argument('-v', '--verbose', action='count', default=0, help="-v for INFO, -vv for DEBUG")
    commands = parser.add_subparsers(dest='command', required=True)

    recon = commands.add_parser('reconstruct', help="reconstruct a cyclic image")
    recon.add_argument('--config', help="key=value run file; flags override it")
    for flag, dest, kind, help_text in _RUN_FLAGS:
        recon.add_argument(f'--{flag}', dest=dest, type=kind, default=None, help=help_text)
    recon.add_argument('--hue-preview', dest='hue_preview', action='store_const', const='true', default=None,
                       help="render the preview on the hue wheel")

    gen = commands.add_parser('synth', help="write a synthetic noisy phase image")
    gen.add_argument('--output-dir', required=True)
    gen.add_argument('--dims', type=int, nargs='+', default=list(SYNTH_DEFAULTS['dims']))
    gen.add_argument('--pattern', choices=SYNTH_PATTERNS, default=SYNTH_DEFAULTS['pattern'])
    gen.add_argument('--noise', type=float, default=SYNTH_DEFAULTS['noise'])
    gen.add_argument('--seed', type=int, default=SYNTH_DEFAULTS['seed'])
    gen.add_argument('--phase-a', type=float, default=SYNTH_DEFAULTS['phase_a'])
    gen.add_argument('--phase-b', type=float, default=SYNTH_DEFAULTS['phase_b'])

    en = commands.add_parser('energy', help="evaluate the relaxed energy of u given D and S")
    en.add_argument('--u', required=True)
    en.add_argument('--data', required=True)
    en.add_argument('--smoothness', required=True)

    tp = commands.add_parser('trace-plot-data', help="convert a trace CSV for plotting")
    tp.add_argument('trace')
    tp.add_argument('--output', required=True)
    return parser


def _reconstruct(args) -> int:
    overrides = {dest: getattr(args, dest) for _, dest, _, _ in _RUN_FLAGS}
    overrides['hue_preview'] = args.hue_preview
    cfg = load_run_config(args.config, overrides)
    result = run(cfg)
    if result.converged:
        print(f"✅ Converged after {result.iterations} iterations")
        return EXIT_SUCCESS
    print(f"⚠️  Not converged after {result.iterations} iterations; results were still written")
    return EXIT_NOT_CONVERGED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        threads = configure_threads()
        logger.debug("Using %d worker thread(s)", threads)
        if args.command == 'reconstruct':
            return _reconstruct(args)
        if args.command == 'synth':
            paths = synth(SynthConfig(output_dir=args.output_dir, dims=tuple(args.dims), pattern=args.pattern,
                                      noise=args.noise, seed=args.seed, phase_a=args.phase_a,
                                      phase_b=args.phase_b))
            print(f"✅ Wrote {', '.join(str(p) for p in paths.values())}")
            return EXIT_SUCCESS
        if args.command == 'energy':
            report = evaluate_energy(args.u, args.data, args.smoothness)
            print(f"data={report.data_energy:.17g} smoothness={report.smoothness_energy:.17g} "
                  f"total={report.total:.17g}")
            return EXIT_SUCCESS
        trace_plot_data(pd.read_csv(args.trace)).to_csv(args.output, index=False, float_format='%.17g')
        print(f"✅ Wrote {args.output}")
        return EXIT_SUCCESS
    except (FieldFormatError, ValueError, OSError, FloatingPointError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
