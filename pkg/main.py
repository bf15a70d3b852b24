"""
pRobin - Main Entry Point
Laboratoire numérique du premier couple propre du p-Laplacien
avec conditions mixtes Dirichlet / Robin.

Usage:
    python main.py solve --config config/settings.yaml --out runs/solve
    python main.py coating-sweep --set problem.p=3 --set coating.rho=2
    python main.py derivative-check --out runs/derivative
    python main.py reconstruct --set inverse.noise_flux=0.01 --seed 7
    python main.py stability-probe --threads 4
    python main.py limits-scan --set limits.scan=bv
"""

import argparse
import copy
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml

# ✅ FIX CRASH EMOJI WINDOWS: Forcer l'encodage UTF-8 pour la console
if sys.platform == 'win32':
    sys.stdout.reconfigure(encoding='utf-8')
    sys.stderr.reconfigure(encoding='utf-8')

# Ajouter le dossier racine au path
sys.path.insert(0, str(Path(__file__).parent))

from loguru import logger

from core.domain import (
    BoundaryLabel, DiscreteDomain, DomainMode, GammaEnd, ThicknessProfile, build_interval_domain,
    build_radial_domain,
)
from core.eigensolver import (
    EigenSolveSettings, PLaplaceEigenSolver, RobinField, boundary_flux, check_exponent, principal_eigenpair,
)
from core.errors import (
    ConfigError, InvalidParameter, NoConvergence, NoDescentDirection, ProbinError, UnsupportedExponent,
)
from core.mesh_io import read_mesh
from core.meshes import SQUARE_SIDES, annulus_mesh, disk_mesh, unit_square_mesh
from core.sensitivity import derivative_remainder_probe, lambda_derivative, solve_linearized
from inverse.measurement import forward_measure, read_measurement, write_measurement
from inverse.parameterization import BasisKind, RobinParameterization
from inverse.reconstruction import (
    NoiseModel, ReconstructionSettings, gauss_newton_reconstruct, write_reconstruction_report,
)
from inverse.stability import stability_probe
from studies.limits import (
    bv_trend, coating_sweep, linf_knee_search, p_continuity_scan, p_limit_classify_inf, p_limit_scan_one,
)
from utils.artifacts import package_versions, read_csv, write_csv, write_manifest, write_value
from utils.helpers import (
    dump_config, file_sha256, load_config, print_banner, resolve_threads, spawn_seeds, text_sha256,
)
from utils.logger import setup_logger

SUBCOMMANDS = ("solve", "coating-sweep", "derivative-check", "reconstruct", "stability-probe", "limits-scan")
LIMIT_SCANS = ("p1", "pinf", "continuity", "linf", "bv")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_CONFIG_ERROR = 3

# Valeurs par défaut: toute clé absente de ce schéma est refusée
DEFAULTS: Dict[str, Dict[str, Any]] = {
    'run': {
        'seed': 12345,
        'out': 'runs/latest',
        'threads': 1,
        'log_level': 'INFO',
    },
    'domain': {
        'mode': 'interval',
        'n_cells': 256,
        'gamma_end': 'right',
        'r_inner': 0.5,
        'r_outer': 1.0,
        'space_dim': 2,
        'inner_label': 'dirichlet',
        'outer_label': 'robin',
        'planar_mesh': 'square',
        'n': 16,
        'gamma_sides': ['top'],
        'levels': 4,
        'gamma_fraction': 1.0,
        'n_theta': 48,
        'n_r': 8,
        'mesh_file': None,
    },
    'problem': {
        'p': 2.0,
        'h': 1.0,
        'h_file': None,
    },
    'solver': {
        'tol_lambda': 1e-10,
        'tol_u': 1e-8,
        'max_outer': 500,
        'max_inner': 60,
        'tol_inner': 1e-13,
        'delta_inner': 1e-8,
    },
    'coating': {
        'rho': 1.0,
        'epsilons': [0.1, 0.05, 0.025, 0.0125],
        'n_layer_cells': 4,
    },
    'derivative': {
        'xi': 1.0,
        'fd_step': 1e-4,
        'tol_lambda': 1e-12,
        'tol_u': 1e-12,
        't_values': [0.2, 0.1, 0.05, 0.025, 0.0125],
    },
    'inverse': {
        'basis': 'piecewise_constant',
        'k': 1,
        'degree': 3,
        'h_min': 1e-3,
        'h_true': 1.0,
        'init_scale': 0.5,
        'reg_weight': 0.0,
        'noise_flux': 0.0,
        'noise_lambda': 0.0,
        'data_file': None,
        'max_iter': 30,
        'armijo_c': 1e-4,
        'misfit_tol': 1e-13,
        'stagnation_tol': 1e-10,
        'delta_reg': None,
    },
    'stability': {
        'radii': [0.4, 0.3, 0.2, 0.15, 0.1, 0.075, 0.05, 0.03, 0.02, 0.01],
        'M': 0.5,
        'holdout_every': 4,
    },
    'limits': {
        'scan': 'continuity',
        'p0': 2.0,
        'p_grid': [1.8, 1.85, 1.9, 1.95, 2.0, 2.05, 2.1, 2.15, 2.2],
        'p1_grid': [2.0, 1.5, 1.25, 1.1, 1.05],
        'pinf_grid': [2.0, 4.0, 8.0, 16.0, 32.0],
        'rho_values': [0.5, 1.0, 2.0],
        'knee_points': 41,
        'jump_points': 19,
        'bv_p_values': [1.3, 1.2, 1.1],
    },
}

# Clés acceptant un scalaire ou une liste
FLEXIBLE_KEYS = {'problem.h', 'inverse.h_true'}
# Clés optionnelles (défaut None) et leur type
OPTIONAL_KEYS: Dict[str, Callable[[Any], Any]] = {
    'domain.mesh_file': str,
    'problem.h_file': str,
    'inverse.data_file': str,
    'inverse.delta_reg': float,
}


@dataclass
class RunConfig:
    """Configuration validée d'un run."""
    subcommand: str
    sections: Dict[str, Dict[str, Any]]
    config_path: Optional[Path] = None
    input_files: List[Path] = field(default_factory=list)
    report: bool = False

    @property
    def out_dir(self) -> Path:
        return Path(self.sections['run']['out'])

    @property
    def seed(self) -> int:
        return int(self.sections['run']['seed'])

    @property
    def threads(self) -> int:
        return int(self.sections['run']['threads'])

    def section(self, name: str) -> Dict[str, Any]:
        return self.sections[name]

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.sections)

    def solver_settings(self) -> EigenSolveSettings:
        return EigenSolveSettings.from_config(self.sections, seed=self.seed)


# =============================================================================
# CONFIGURATION
# =============================================================================

def _coerce(name: str, value: Any, default: Any) -> Any:
    """Convertit une valeur lue (YAML ou --set) vers le type de son défaut."""
    try:
        if name in FLEXIBLE_KEYS:
            if isinstance(value, (list, tuple)):
                return [float(v) for v in value]
            return float(value)
        if name in OPTIONAL_KEYS:
            return None if value is None else OPTIONAL_KEYS[name](value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            items = value if isinstance(value, (list, tuple)) else [v for v in str(value).split(',') if v.strip()]
            kind = type(default[0]) if default else str
            return [kind(v.strip()) if isinstance(v, str) else kind(v) for v in items]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r}")


def _merge(sections: Dict[str, Dict[str, Any]], source: Dict[str, Any], origin: str) -> None:
    for section, values in source.items():
        if section not in DEFAULTS:
            raise ConfigError(f"Unknown config section '{section}' ({origin})")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"Config section '{section}' must hold key/value pairs ({origin})")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"Unknown config key '{section}.{key}' ({origin})")
            sections[section][key] = _coerce(f"{section}.{key}", value, DEFAULTS[section][key])


def _parse_override(text: str) -> Dict[str, Dict[str, Any]]:
    """'section.key=value' → {section: {key: value}}."""
    if '=' not in text or '.' not in text.split('=', 1)[0]:
        raise ConfigError(f"Override '{text}' must look like section.key=value")
    name, raw = text.split('=', 1)
    section, key = name.strip().split('.', 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        value = raw
    return {section: {key: value}}


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _validate(config: RunConfig) -> None:
    """Bornes numériques et fichiers référencés."""
    s = config.sections
    domain, problem, inverse = s['domain'], s['problem'], s['inverse']

    try:
        check_exponent(problem['p'])
        if config.subcommand == "limits-scan" and s['limits']['scan'] == "continuity":
            check_exponent(s['limits']['p0'])
            for p in s['limits']['p_grid']:
                check_exponent(p)
        for value in np.atleast_1d(problem['h']):
            if value < 0:
                raise InvalidParameter("h must be nonnegative")
        EigenSolveSettings.from_config(s)
    except InvalidParameter as exc:
        raise ConfigError(str(exc))

    _require(domain['mode'] in {m.value for m in DomainMode}, f"domain.mode must be one of "
             f"{[m.value for m in DomainMode]}")
    _require(domain['gamma_end'] in {g.value for g in GammaEnd}, "domain.gamma_end must be left|right|both|none")
    _require(domain['n_cells'] >= 2, "domain.n_cells must be ≥ 2")
    _require(0 <= domain['r_inner'] < domain['r_outer'], "domain requires 0 ≤ r_inner < r_outer")
    _require(domain['space_dim'] >= 2, "domain.space_dim must be ≥ 2")
    _require(domain['planar_mesh'] in ("square", "disk", "annulus"), "domain.planar_mesh must be square|disk|annulus")
    _require(set(domain['gamma_sides']) <= set(SQUARE_SIDES), f"domain.gamma_sides must be within {SQUARE_SIDES}")
    _require(0 < domain['gamma_fraction'] <= 1, "domain.gamma_fraction must lie in (0, 1]")
    _require(s['run']['threads'] >= 1, "run.threads must be ≥ 1")
    _require(s['run']['seed'] >= 0, "run.seed must be a nonnegative integer")

    epsilons = np.asarray(s['coating']['epsilons'])
    _require(s['coating']['rho'] > 0, "coating.rho must be > 0")
    _require(epsilons.size > 0 and np.all(epsilons > 0) and np.all(np.diff(epsilons) < 0),
             "coating.epsilons must be positive and strictly decreasing")
    _require(s['coating']['n_layer_cells'] >= 1, "coating.n_layer_cells must be ≥ 1")
    _require(s['derivative']['fd_step'] > 0, "derivative.fd_step must be > 0")
    _require(s['derivative']['tol_lambda'] > 0 and s['derivative']['tol_u'] > 0,
             "derivative.tol_lambda and derivative.tol_u must be > 0")
    _require(all(t > 0 for t in s['derivative']['t_values']), "derivative.t_values must be > 0")

    _require(inverse['basis'] in {b.value for b in BasisKind}, "inverse.basis must be piecewise_constant|bspline")
    _require(inverse['k'] >= 1, "inverse.k must be ≥ 1")
    _require(inverse['h_min'] >= 0, "inverse.h_min must be nonnegative")
    _require(min(np.atleast_1d(inverse['h_true'])) >= 0, "h must be nonnegative")
    _require(inverse['init_scale'] > 0, "inverse.init_scale must be > 0")
    _require(inverse['reg_weight'] >= 0, "inverse.reg_weight must be nonnegative")
    _require(inverse['noise_flux'] >= 0 and inverse['noise_lambda'] >= 0, "noise levels must be nonnegative")

    radii = np.asarray(s['stability']['radii'])
    _require(s['stability']['M'] > 0, "stability.M must be > 0")
    _require(np.all(radii >= 0) and np.all(radii <= s['stability']['M']),
             "stability.radii must lie in [0, M]")
    _require(s['limits']['scan'] in LIMIT_SCANS, f"limits.scan must be one of {list(LIMIT_SCANS)}")
    _require(all(r > 0 for r in s['limits']['rho_values']), "limits.rho_values must be > 0")

    for name, value in (('domain.mesh_file', domain['mesh_file']), ('problem.h_file', problem['h_file']),
                        ('inverse.data_file', inverse['data_file'])):
        if value is not None:
            path = Path(value)
            _require(path.exists(), f"{name}: file not found: {value}")
            config.input_files.append(path)


def parse_config(subcommand: str, config_path: Optional[str] = None, overrides: Sequence[str] = (),
                 seed: Optional[int] = None, out: Optional[str] = None,
                 threads: Optional[int] = None) -> RunConfig:
    """
    Défauts < fichier YAML < options (--seed, --out, --threads, --set)
    < PROBIN_THREADS.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"Unknown subcommand '{subcommand}'")
    sections = copy.deepcopy(DEFAULTS)
    path = None
    if config_path is not None:
        path = Path(config_path)
        try:
            loaded = load_config(str(path))
        except (FileNotFoundError, ValueError) as exc:
            raise ConfigError(str(exc))
        _merge(sections, loaded, str(path))

    flags = {'run': {}}
    if seed is not None:
        flags['run']['seed'] = seed
    if out is not None:
        flags['run']['out'] = out
    _merge(sections, flags, "command line")
    for text in overrides:
        _merge(sections, _parse_override(text), "--set")
    sections['run']['threads'] = resolve_threads(threads if threads is not None else sections['run']['threads'])

    config = RunConfig(subcommand=subcommand, sections=sections, config_path=path)
    if path is not None:
        config.input_files.append(path)
    _validate(config)
    return config


# =============================================================================
# CONSTRUCTION DES OBJETS
# =============================================================================

def build_domain(config: RunConfig) -> DiscreteDomain:
    section = config.section('domain')
    if section['mesh_file'] is not None:
        return read_mesh(section['mesh_file'])
    mode = DomainMode(section['mode'])
    if mode == DomainMode.INTERVAL:
        return build_interval_domain(section['n_cells'], section['gamma_end'])
    if mode == DomainMode.RADIAL:
        return build_radial_domain(section['n_cells'], section['r_inner'], section['r_outer'],
                                   section['space_dim'], section['inner_label'], section['outer_label'])
    if section['planar_mesh'] == "disk":
        return disk_mesh(section['levels'], section['r_outer'], section['gamma_fraction'])
    if section['planar_mesh'] == "annulus":
        return annulus_mesh(section['n_theta'], section['n_r'], section['r_inner'], section['r_outer'],
                            section['inner_label'], section['outer_label'])
    return unit_square_mesh(section['n'], section['gamma_sides'])


def build_robin_field(config: RunConfig, domain: DiscreteDomain) -> RobinField:
    """h constant, liste de valeurs par face de γ, ou fichier CSV (colonne 'h')."""
    problem = config.section('problem')
    if problem['h_file'] is not None:
        frame = read_csv(problem['h_file'])
        if 'h' not in frame.columns:
            raise ConfigError(f"{problem['h_file']}: missing column 'h'")
        field_h = RobinField(frame['h'].to_numpy(dtype=float))
    elif isinstance(problem['h'], list):
        field_h = RobinField(problem['h'])
    else:
        return RobinField.constant(domain, problem['h'])
    try:
        field_h.validate_for(domain)
    except InvalidParameter as exc:
        raise ConfigError(f"problem.h: {exc}")
    return field_h


def _coefficients(value, k: int, name: str) -> np.ndarray:
    values = np.atleast_1d(np.asarray(value, dtype=float))
    if values.size == 1:
        return np.full(k, float(values[0]))
    if values.size != k:
        raise ConfigError(f"{name} needs 1 or k={k} values (got {values.size})")
    return values


def _report(config: RunConfig, result) -> None:
    """Rapport tabulé sur stdout (désactivé par --quiet)."""
    if config.report:
        result.print_report()


# =============================================================================
# SOUS-COMMANDES
# =============================================================================

def cmd_solve(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    domain = build_domain(config)
    p = config.section('problem')['p']
    h = build_robin_field(config, domain)
    pair = principal_eigenpair(domain, p, h, config.solver_settings())

    write_csv(pd.DataFrame({'node': np.arange(domain.n_nodes), 'u': pair.u}), out_dir / "eigenpair.csv")
    write_csv(pd.DataFrame([{'lambda': pair.eigenvalue, 'residual': pair.residual_norm,
                             'iters': pair.iterations}]), out_dir / "summary.csv")
    summary = pair.to_dict()
    if domain.faces_with_label(BoundaryLabel.DIRICHLET).size:
        trace = boundary_flux(domain, p, pair, BoundaryLabel.DIRICHLET)
        write_csv(trace.to_frame(), out_dir / "flux.csv")
        summary['hopf_ok'] = trace.hopf_ok
    return summary


def cmd_coating_sweep(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    domain = build_domain(config)
    coating = config.section('coating')
    result = coating_sweep(
        domain, ThicknessProfile.constant(domain, coating['rho']), config.section('problem')['p'],
        coating['epsilons'], config.solver_settings(), n_layer_cells=coating['n_layer_cells'],
        max_workers=config.threads,
    )
    frame = result.to_frame()[['epsilon', 'Lambda1', 'coating_mass', 'mu1', 'abs_gap']]
    write_csv(frame, out_dir / "sweep.csv")
    write_value(out_dir / "rate.txt", result.rate)
    _report(config, result)
    return result.to_dict()


def cmd_derivative_check(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    domain = build_domain(config)
    p = config.section('problem')['p']
    h = build_robin_field(config, domain)
    section = config.section('derivative')
    xi = RobinField.direction(np.full(h.values.size, section['xi']), h.representation)
    # λ' formule et linéarisé ne coïncident qu'au niveau des tolérances du solveur
    settings = config.solver_settings()
    settings = replace(settings, tol_lambda=min(settings.tol_lambda, section['tol_lambda']),
                       tol_u=min(settings.tol_u, section['tol_u']))

    remainder = derivative_remainder_probe(domain, p, h, xi, section['t_values'], settings)
    write_csv(pd.DataFrame(remainder.rows), out_dir / "remainder.csv")
    write_value(out_dir / "remainder_order.txt", remainder.remainder_order)

    base = principal_eigenpair(domain, p, h, settings)
    formula = lambda_derivative(base, xi, domain)
    try:
        linearized = solve_linearized(domain, p, h, base, xi).lambda_prime
    except UnsupportedExponent as exc:
        logger.warning(f"⚠️ Linearized solve skipped: {exc}")
        linearized = np.nan
    step = section['fd_step']
    solver = PLaplaceEigenSolver(settings)
    upper = solver.solve(domain, p, h.perturbed(xi, step), initial=base.u).eigenvalue
    lower = solver.solve(domain, p, h.perturbed(xi, -step), initial=base.u).eigenvalue
    central = (upper - lower) / (2 * step)
    row = {
        'lambda': base.eigenvalue,
        'lambda_prime_formula': formula,
        'lambda_prime_linearized': linearized,
        'lambda_prime_fd': central,
        'formula_vs_linearized': abs(formula - linearized),
        'formula_vs_fd_relative': abs(formula - central) / max(abs(central), np.finfo(float).tiny),
    }
    write_csv(pd.DataFrame([row]), out_dir / "derivative.csv")
    return {**row, 'remainder_order': remainder.remainder_order}


def cmd_reconstruct(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    domain = build_domain(config)
    p = config.section('problem')['p']
    inverse = config.section('inverse')
    parameterization = RobinParameterization.from_config(config.sections)
    settings = ReconstructionSettings.from_config(config.sections, config.solver_settings(), config.threads)
    c_true = _coefficients(inverse['h_true'], parameterization.k, "inverse.h_true")
    noise = NoiseModel(inverse['noise_flux'], inverse['noise_lambda'])

    if inverse['data_file'] is not None:
        data = read_measurement(inverse['data_file'], domain, p)
    else:
        clean = forward_measure(domain, p, parameterization.synthesize(domain, c_true), settings.solver)
        data = noise.apply(clean, np.random.default_rng(spawn_seeds(config.seed, 1)[0]))
    write_measurement(data, out_dir / "data.csv")

    h_init = parameterization.synthesize(domain, parameterization.project(inverse['init_scale'] * c_true))
    try:
        result = gauss_newton_reconstruct(domain, p, data, parameterization, h_init, inverse['reg_weight'],
                                          noise, settings)
    except NoDescentDirection as exc:
        if exc.best is not None:
            write_reconstruction_report(exc.best, out_dir / "reconstruction.csv")
        raise
    write_reconstruction_report(result, out_dir / "reconstruction.csv")
    errors = np.abs(result.c_hat - c_true)
    write_csv(pd.DataFrame({'index': np.arange(parameterization.k), 'c_hat': result.c_hat,
                            'c_true': c_true, 'abs_error': errors}), out_dir / "coefficients.csv")
    summary = result.to_dict()
    summary['relative_error'] = float(np.linalg.norm(result.c_hat - c_true) / np.linalg.norm(c_true))
    return summary


def cmd_stability_probe(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    domain = build_domain(config)
    section = config.section('stability')
    result = stability_probe(
        domain, config.section('problem')['p'], build_robin_field(config, domain),
        RobinParameterization.from_config(config.sections), section['radii'], section['M'],
        settings=config.solver_settings(), seed=config.seed, max_workers=config.threads,
        holdout_every=section['holdout_every'],
    )
    write_csv(result.to_frame(), out_dir / "stability.csv")
    write_csv(result.fit_frame(), out_dir / "stability_fit.csv")
    _report(config, result)
    return result.to_dict()


def cmd_limits_scan(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    section = config.section('limits')
    scan = section['scan']
    if scan == "p1":
        result = p_limit_scan_one(section['rho_values'], section['p1_grid'])
        write_csv(result.to_frame(), out_dir / "limits_p1.csv")
        _report(config, result)
        return result.to_dict()
    if scan == "pinf":
        grid = np.asarray(section['pinf_grid'])
        rows = [{'rho': rho, 'classification': p_limit_classify_inf(rho, grid).value,
                 **{f"h_p={p:g}": rho ** (-(p - 1)) for p in grid}} for rho in section['rho_values']]
        write_csv(pd.DataFrame(rows), out_dir / "limits_pinf.csv")
        return {'classifications': {str(row['rho']): row['classification'] for row in rows}}

    domain = build_domain(config)
    settings = config.solver_settings()
    if scan == "continuity":
        result = p_continuity_scan(domain, build_robin_field(config, domain), section['p0'], section['p_grid'],
                                   settings, config.threads)
        write_csv(result.to_frame(), out_dir / "limits_continuity.csv")
        write_value(out_dir / "max_jump.txt", result.max_jump)
        _report(config, result)
        return result.to_dict()
    if domain.mode != DomainMode.INTERVAL:
        raise ConfigError(f"limits.scan={scan} runs on domain.mode=interval")
    if scan == "linf":
        grid = np.linspace(0.0, 1.0, section['knee_points'])[1:-1]
        value, (position, height) = linf_knee_search(domain, grid, np.linspace(0.0, 2.0, section['knee_points']))
        write_csv(pd.DataFrame([{'value': value, 'knee_position': position, 'knee_height': height}]),
                  out_dir / "limits_linf.csv")
        return {'value': value, 'knee_position': position, 'knee_height': height}
    if scan != "bv":
        raise ConfigError(f"limits.scan must be one of {list(LIMIT_SCANS)}")
    h_value = config.section('problem')['h']
    if isinstance(h_value, list):
        raise ConfigError("limits.scan=bv needs a constant problem.h")
    positions = np.linspace(0.0, 0.9, section['jump_points'])
    result = bv_trend(domain, section['bv_p_values'], h_value, settings, positions)
    write_csv(result.to_frame(), out_dir / "limits_bv.csv")
    _report(config, result)
    return result.to_dict()


COMMANDS: Dict[str, Callable[[RunConfig, Path], Dict[str, Any]]] = {
    "solve": cmd_solve,
    "coating-sweep": cmd_coating_sweep,
    "derivative-check": cmd_derivative_check,
    "reconstruct": cmd_reconstruct,
    "stability-probe": cmd_stability_probe,
    "limits-scan": cmd_limits_scan,
}


# =============================================================================
# EXÉCUTION
# =============================================================================

def _manifest_base(config: RunConfig, resolved_text: str) -> Dict[str, Any]:
    return {
        'subcommand': config.subcommand,
        'seed': config.seed,
        'threads': config.threads,
        'started_at': datetime.now().isoformat(timespec='seconds'),
        'inputs': {
            'resolved_config_sha256': text_sha256(resolved_text),
            'files': {str(path): file_sha256(path) for path in config.input_files},
        },
        'versions': package_versions(),
    }


def run(config: RunConfig, console: bool = True) -> int:
    """Exécute la sous-commande et écrit artefacts + manifeste; renvoie le code de sortie."""
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    setup_logger(config.section('run')['log_level'], str(out_dir / "logs"), console=console)
    config.report = console

    resolved_path = dump_config(config.to_dict(), out_dir / "resolved_config.yaml")
    manifest = _manifest_base(config, resolved_path.read_text(encoding='utf-8'))
    logger.info(f"🚀 {config.subcommand} → {out_dir} (seed={config.seed}, threads={config.threads})")

    start = time.perf_counter()
    exit_code, error, summary = EXIT_OK, None, None
    try:
        summary = COMMANDS[config.subcommand](config, out_dir)
    except ConfigError as exc:
        exit_code, error = EXIT_CONFIG_ERROR, exc.to_dict()
        logger.error(f"❌ Configuration error: {exc}")
    except NoConvergence as exc:
        exit_code, error = EXIT_NO_CONVERGENCE, exc.to_dict()
        logger.error(f"❌ Solver did not converge: {exc}")
    except ProbinError as exc:
        exit_code, error = EXIT_FAILURE, exc.to_dict()
        logger.error(f"❌ {exc.code}: {exc}")
    except Exception as exc:
        exit_code, error = EXIT_FAILURE, {'code': "INTERNAL_ERROR", 'message': str(exc)}
        logger.exception(f"❌ Unexpected failure: {exc}")

    manifest.update({
        'status': "ok" if exit_code == EXIT_OK else "error",
        'exit_code': exit_code,
        'error': error,
        'wall_time_s': round(time.perf_counter() - start, 6),
        'summary': summary,
        'artifacts': sorted(path.name for path in out_dir.iterdir() if path.is_file()),
    })
    write_manifest(out_dir, manifest)
    if exit_code == EXIT_OK:
        logger.success(f"✅ {config.subcommand} terminé en {manifest['wall_time_s']:.2f}s")
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="pRobin - p-Laplacian Robin eigenvalue lab")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="Experiment to run")
    parser.add_argument("--config", default=None, help="Path to a YAML config file")
    parser.add_argument("--out", default=None, help="Output directory (overrides run.out)")
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides run.seed)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (PROBIN_THREADS wins)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config value (repeatable)")
    parser.add_argument("--quiet", action="store_true", help="Log to files only")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.subcommand, args.config, args.overrides, args.seed, args.out, args.threads)
    except ConfigError as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        if args.out is not None:
            write_manifest(Path(args.out), {
                'subcommand': args.subcommand, 'status': "error", 'exit_code': EXIT_CONFIG_ERROR,
                'error': exc.to_dict(), 'versions': package_versions(),
            })
        return EXIT_CONFIG_ERROR
    if not args.quiet:
        print_banner()
    return run(config, console=not args.quiet)


if __name__ == "__main__":
    sys.exit(main())
