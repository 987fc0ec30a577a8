"""Validated run configurations, orchestration, and artifact persistence.

A run is a directory: ``config.json`` (normalized echo), the emitted data
files, and a ``manifest.json`` written last with a checksummed inventory.
A run directory is complete exactly when its manifest exists and validates.
All scalars land in CSV/JSON with 12 significant digits; everything is in
hartree atomic units.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import __version__, iemodel
from .analysis import (
    Spectrum1D,
    _bin_levels,
    build_bound,
    build_continuum,
    build_radial_spectra,
    angular_distribution,
    helium_ionization_report,
    one_electron_report,
    slow_fast_ratio,
)
from .angular import ChannelSet, enumerate_channels, one_electron_channels
from .bsplines import RadialBasis, build_radial_basis
from .eigensolve import EigenResult, bound_states, exchange_character, radial_eigenbasis
from .iemodel import sae_potential
from .kh import kh_bound_spectrum, kh_two_electron_ground, kh_v_lambda, kh_v_lambda_fourier
from .operators import (
    BlockOperator,
    OverlapOperator,
    assemble_absorber,
    assemble_atomic,
    assemble_dipole_velocity,
    assemble_ee,
    assemble_overlap,
)
from .propagation import ChannelFactorization, GmresConfig, TimeGrid, propagate
from .pulses import SineSquaredPulse, pulse_from_quiver

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STATE_FORMAT_VERSION = 1
ATTOSECONDS_PER_AU = 24.188843265857

_SYSTEM_KINDS = ("hydrogenic", "sae", "helium-full", "helium-ie")
_GRADINGS = ("linear", "exp_then_linear")
_SWEEP_AXES = ("alpha0", "omega", "cycles")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# =====================================================================
# Configuration schema
# =====================================================================

@dataclass(frozen=True)
class SystemConfig:
    kind: str
    z: float


@dataclass(frozen=True)
class BasisConfig:
    r_max: float = 20.0
    n_splines: int = 40
    order: int = 5
    grading: str = "exp_then_linear"


@dataclass(frozen=True)
class ChannelConfig:
    lmax: int = 2
    total_l_max: int = 2
    lam_max: int | None = None   # electron-repulsion multipole cutoff; None -> 2*lmax


@dataclass(frozen=True)
class PulseConfig:
    omega: float
    n_cycles: int
    e0: float | None = None
    alpha0: float | None = None  # exactly one of e0/alpha0; the other is derived


@dataclass(frozen=True)
class PropagationConfig:
    steps_per_cycle: int = 200
    gmres_rtol: float = 1e-10
    post_cycles: float = 1.0     # field-free coast appended after the pulse
    absorber_r: float | None = None
    absorber_eta: float = 0.5


@dataclass(frozen=True)
class AnalysisConfig:
    bin_fraction: int = 40       # energy bin = omega / bin_fraction
    e_max: float | None = None
    e_c: float | None = None     # slow/fast threshold; None -> 1.5*omega - Ip
    n_bound: int = 4
    angular: bool = True
    theta_points: int = 65


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/out"


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    basis: BasisConfig
    channels: ChannelConfig
    pulse: PulseConfig
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0                # reserved; all solvers run deterministically
    schema_version: int = SCHEMA_VERSION


def _num(v):
    return None if isinstance(v, (int, float)) and not isinstance(v, bool) else "must be a number"


def _pos(v):
    return _num(v) or (None if v > 0 else "must be > 0")


def _nonneg(v):
    return _num(v) or (None if v >= 0 else "must be >= 0")


def _pos_int(v):
    if not isinstance(v, int) or isinstance(v, bool):
        return "must be an integer"
    return None if v > 0 else "must be >= 1"


def _nonneg_int(v):
    if not isinstance(v, int) or isinstance(v, bool):
        return "must be an integer"
    return None if v >= 0 else "must be >= 0"


def _choice(options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(map(str, options))}"
    return check


def _boolean(v):
    return None if isinstance(v, bool) else "must be true or false"


def _string(v):
    return None if isinstance(v, str) and v else "must be a non-empty string"


_SECTIONS: dict[str, dict[str, tuple[bool, Callable]]] = {
    "system": {"kind": (True, _choice(_SYSTEM_KINDS)), "z": (False, _pos)},
    "basis": {
        "r_max": (False, _pos),
        "n_splines": (False, _pos_int),
        "order": (False, _pos_int),
        "grading": (False, _choice(_GRADINGS)),
    },
    "channels": {
        "lmax": (False, _nonneg_int),
        "total_l_max": (False, _nonneg_int),
        "lam_max": (False, _nonneg_int),
    },
    "pulse": {
        "omega": (True, _pos),
        "n_cycles": (True, _pos_int),
        "e0": (False, _nonneg),
        "alpha0": (False, _nonneg),
    },
    "propagation": {
        "steps_per_cycle": (False, _pos_int),
        "gmres_rtol": (False, _pos),
        "post_cycles": (False, _nonneg),
        "absorber_r": (False, _pos),
        "absorber_eta": (False, _pos),
    },
    "analysis": {
        "bin_fraction": (False, _pos_int),
        "e_max": (False, _pos),
        "e_c": (False, _pos),
        "n_bound": (False, _pos_int),
        "angular": (False, _boolean),
        "theta_points": (False, _pos_int),
    },
    "output": {"directory": (False, _string)},
}


def validate_config_dict(raw: dict) -> list[str]:
    """Schema check; each problem names the offending key."""
    if not isinstance(raw, dict):
        return ["config: must be a JSON object"]
    errors: list[str] = []
    known_top = set(_SECTIONS) | {"schema_version", "seed"}
    for key in raw:
        if key not in known_top:
            errors.append(f"{key}: unknown key")
    sv = raw.get("schema_version", SCHEMA_VERSION)
    if sv != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {sv!r}")
    if "seed" in raw and _nonneg_int(raw["seed"]):
        errors.append(f"seed: {_nonneg_int(raw['seed'])}")

    for name, fields in _SECTIONS.items():
        sec = raw.get(name)
        if sec is None:
            required = [k for k, (req, _) in fields.items() if req]
            if required:
                errors.append(f"{name}: section required (needs {', '.join(required)})")
            continue
        if not isinstance(sec, dict):
            errors.append(f"{name}: must be an object")
            continue
        for key in sec:
            if key not in fields:
                errors.append(f"{name}.{key}: unknown key")
        for key, (required, check) in fields.items():
            if sec.get(key) is None:
                if required:
                    errors.append(f"{name}.{key}: required")
                continue
            msg = check(sec[key])
            if msg:
                errors.append(f"{name}.{key}: {msg}")

    pulse = raw.get("pulse") or {}
    if isinstance(pulse, dict):
        given = [k for k in ("e0", "alpha0") if pulse.get(k) is not None]
        if len(given) != 1 and not any(e.startswith("pulse:") for e in errors):
            errors.append("pulse.e0/pulse.alpha0: give exactly one")
    basis = raw.get("basis") or {}
    prop = raw.get("propagation") or {}
    if isinstance(basis, dict) and isinstance(prop, dict):
        r_abs, r_max = prop.get("absorber_r"), basis.get("r_max", 20.0)
        if isinstance(r_abs, (int, float)) and isinstance(r_max, (int, float)) and not r_abs < r_max:
            errors.append(f"propagation.absorber_r: must be < basis.r_max ({r_max})")
    b_ns, b_k = basis.get("n_splines", 40), basis.get("order", 5)
    if isinstance(b_ns, int) and isinstance(b_k, int) and 0 < b_ns <= b_k:
        errors.append("basis.n_splines: must exceed basis.order")
    return errors


def config_from_dict(raw: dict) -> RunConfig:
    errors = validate_config_dict(raw)
    if errors:
        raise ConfigError("invalid configuration: " + "; ".join(errors))
    sysd = dict(raw["system"])
    kind = sysd["kind"]
    if sysd.get("z") is None:
        sysd["z"] = 2.0 if kind.startswith("helium") else 1.0

    def section(name, cls):
        data = {k: v for k, v in (raw.get(name) or {}).items() if v is not None}
        return cls(**data)

    return RunConfig(
        system=SystemConfig(kind=kind, z=float(sysd["z"])),
        basis=section("basis", BasisConfig),
        channels=section("channels", ChannelConfig),
        pulse=section("pulse", PulseConfig),
        propagation=section("propagation", PropagationConfig),
        analysis=section("analysis", AnalysisConfig),
        output=section("output", OutputConfig),
        seed=int(raw.get("seed", 0)),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "schema_version": cfg.schema_version,
        "system": asdict(cfg.system),
        "basis": asdict(cfg.basis),
        "channels": asdict(cfg.channels),
        "pulse": asdict(cfg.pulse),
        "propagation": asdict(cfg.propagation),
        "analysis": asdict(cfg.analysis),
        "output": asdict(cfg.output),
        "seed": cfg.seed,
    }


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


PRESETS = {
    "hydrogen": {
        "system": {"kind": "hydrogenic", "z": 1.0},
        "basis": {"r_max": 60.0, "n_splines": 70, "order": 7, "grading": "exp_then_linear"},
        "channels": {"lmax": 4},
    },
    "heplus": {
        "system": {"kind": "hydrogenic", "z": 2.0},
        "basis": {"r_max": 25.0, "n_splines": 70, "order": 7, "grading": "exp_then_linear"},
        "channels": {"lmax": 4},
    },
    "sae": {
        "system": {"kind": "sae"},
        "basis": {"r_max": 40.0, "n_splines": 60, "order": 7, "grading": "exp_then_linear"},
        "channels": {"lmax": 4},
    },
    "he-small": {
        "system": {"kind": "helium-full", "z": 2.0},
        "basis": {"r_max": 20.0, "n_splines": 40, "order": 5, "grading": "exp_then_linear"},
        "channels": {"lmax": 2, "total_l_max": 2},
    },
    "he-paper-small-box": {
        "system": {"kind": "helium-full", "z": 2.0},
        "basis": {"r_max": 30.0, "n_splines": 90, "order": 7, "grading": "exp_then_linear"},
        "channels": {"lmax": 3, "total_l_max": 2},
    },
    "he-ie": {
        "system": {"kind": "helium-ie", "z": 2.0},
        "basis": {"r_max": 40.0, "n_splines": 60, "order": 7, "grading": "exp_then_linear"},
        "channels": {"lmax": 4},
    },
}


def preset(name: str) -> RunConfig:
    """Shipped desk-scale configuration, runnable as-is."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    raw = json.loads(json.dumps(PRESETS[name]))  # deep copy
    raw.setdefault("pulse", {"omega": 5.0, "n_cycles": 6, "alpha0": 0.5})
    raw.setdefault("output", {"directory": f"runs/{name}"})
    return config_from_dict(raw)


# =====================================================================
# Derived quantities and artifact helpers
# =====================================================================

def pulse_from_config(pc: PulseConfig) -> SineSquaredPulse:
    if pc.alpha0 is not None:
        return pulse_from_quiver(pc.alpha0, pc.omega, pc.n_cycles)
    return SineSquaredPulse(e0=pc.e0, omega=pc.omega, n_cycles=pc.n_cycles)


def derived_quantities(pulse: SineSquaredPulse) -> dict:
    """Field parameters in every labeling the literature uses."""
    return {
        "e0": pulse.e0,
        "omega": pulse.omega,
        "n_cycles": pulse.n_cycles,
        "a0": pulse.a0,
        "alpha0": pulse.alpha0,
        "ponderomotive_energy": pulse.ponderomotive_energy,
        "duration_au": pulse.duration,
        "duration_as": pulse.duration * ATTOSECONDS_PER_AU,
    }


def _fmt(x) -> str:
    """12 significant digits; integers stay integers; blanks for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if np.isnan(xf):
        return ""
    return f"{xf:.12g}"


def _round12(obj):
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        xf = float(obj)
        if np.isnan(xf) or np.isinf(xf):
            return None if np.isnan(xf) else ("inf" if xf > 0 else "-inf")
        return float(f"{xf:.12g}")
    if isinstance(obj, np.ndarray):
        return _round12(obj.tolist())
    return obj


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)  # RFC-4180 CRLF line endings
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_round12(payload), indent=2) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_output_dir(cfg: RunConfig) -> Path:
    root = os.environ.get("XUVATOM_OUTPUT_ROOT", "")
    p = Path(cfg.output.directory)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def write_manifest(run_dir: Path, payload: dict) -> Path:
    """Checksummed inventory, written last and atomically.

    Every file under run_dir is listed except the manifest itself and any
    subdirectory named in payload["subruns"] (those carry their own).
    """
    subruns = list(payload.get("subruns", []))
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if not p.is_file():
            continue
        rel = p.relative_to(run_dir).as_posix()
        if rel == "manifest.json":
            continue
        if any(rel == s or rel.startswith(s + "/") for s in subruns):
            continue
        files[rel] = {"sha256": _sha256(p), "bytes": p.stat().st_size}
    out = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **payload,
        "files": files,
    }
    tmp = run_dir / ".manifest.tmp"
    tmp.write_text(json.dumps(_round12(out), indent=2) + "\n")
    target = run_dir / "manifest.json"
    os.replace(tmp, target)
    return target


def verify_run_dir(run_dir: str | Path) -> list[str]:
    """Empty list when the manifest exists and the inventory matches."""
    run_dir = Path(run_dir)
    man_path = run_dir / "manifest.json"
    if not man_path.is_file():
        return [f"{run_dir}: missing manifest.json"]
    try:
        man = json.loads(man_path.read_text())
    except json.JSONDecodeError as exc:
        return [f"{man_path}: unreadable manifest ({exc})"]
    problems = []
    listed = man.get("files", {})
    subruns = man.get("subruns", [])
    for rel, info in listed.items():
        p = run_dir / rel
        if not p.is_file():
            problems.append(f"{run_dir / rel}: listed but missing")
        elif _sha256(p) != info.get("sha256"):
            problems.append(f"{run_dir / rel}: checksum mismatch")
    for p in sorted(run_dir.rglob("*")):
        if not p.is_file():
            continue
        rel = p.relative_to(run_dir).as_posix()
        if rel == "manifest.json" or rel in listed:
            continue
        if any(rel == s or rel.startswith(s + "/") for s in subruns):
            continue
        problems.append(f"{run_dir / rel}: present but unlisted")
    for sub in subruns:
        problems.extend(verify_run_dir(run_dir / sub))
    return problems


def save_state(path: Path, psi: NDArray, cfg: RunConfig, t: float) -> None:
    np.savez_compressed(
        path,
        format_version=STATE_FORMAT_VERSION,
        psi=psi,
        time=float(t),
        config_json=json.dumps(config_to_dict(cfg)),
    )


def load_state(path: str | Path) -> tuple[RunConfig, NDArray, float]:
    with np.load(path) as d:
        version = int(d["format_version"])
        if version != STATE_FORMAT_VERSION:
            raise ConfigError(f"state file format {version} not supported (expected {STATE_FORMAT_VERSION})")
        cfg = config_from_dict(json.loads(str(d["config_json"])))
        psi = np.array(d["psi"])
        t = float(d["time"])
    return cfg, psi, t


# =====================================================================
# System assembly
# =====================================================================

@dataclass
class SystemBundle:
    cfg: RunConfig
    basis: RadialBasis
    channels: ChannelSet
    potential: Callable[[NDArray], NDArray]
    s_op: OverlapOperator
    h_atomic: BlockOperator       # field-free, incl. electron repulsion
    dipole: BlockOperator         # bare velocity coupling, field applied per run
    absorber: BlockOperator | None
    pulse: SineSquaredPulse

    def driven_hamiltonian(self) -> BlockOperator:
        h = self.h_atomic.plus(self.dipole).with_field(self.pulse.vector_potential)
        if self.absorber is not None:
            h = h.plus(self.absorber)
        return h


def system_potential(sys: SystemConfig) -> Callable[[NDArray], NDArray]:
    if sys.kind == "sae":
        return sae_potential
    z = sys.z
    return lambda r: -z / r


def build_system(cfg: RunConfig) -> SystemBundle:
    if cfg.system.kind == "helium-ie":
        raise ConfigError("system.kind: helium-ie runs through the ie command, not a coupled propagation")
    basis = build_radial_basis(
        r_max=cfg.basis.r_max,
        n_splines=cfg.basis.n_splines,
        order=cfg.basis.order,
        grading=cfg.basis.grading,
    )
    potential = system_potential(cfg.system)
    if cfg.system.kind == "helium-full":
        channels = enumerate_channels(cfg.channels.lmax, cfg.channels.total_l_max, symmetry="singlet")
        lam_max = cfg.channels.lam_max if cfg.channels.lam_max is not None else 2 * cfg.channels.lmax
        h_atomic = assemble_atomic(basis, channels, potential).plus(
            assemble_ee(basis, channels, lam_max=lam_max)
        )
    else:
        channels = one_electron_channels(cfg.channels.lmax)
        h_atomic = assemble_atomic(basis, channels, potential)
    absorber = None
    if cfg.propagation.absorber_r is not None:
        absorber = assemble_absorber(
            basis, channels, r_abs=cfg.propagation.absorber_r, eta=cfg.propagation.absorber_eta
        )
    return SystemBundle(
        cfg=cfg,
        basis=basis,
        channels=channels,
        potential=potential,
        s_op=assemble_overlap(basis, channels),
        h_atomic=h_atomic,
        dipole=assemble_dipole_velocity(basis, channels),
        absorber=absorber,
        pulse=pulse_from_config(cfg.pulse),
    )


def field_free_bound_states(bundle: SystemBundle, n_states: int) -> EigenResult:
    """Bound spectrum below the first breakup threshold."""
    cfg = bundle.cfg
    if cfg.system.kind == "helium-full":
        threshold = -0.5 * cfg.system.z**2
        fac = ChannelFactorization(bundle.basis, bundle.channels, bundle.potential)
        return bound_states(
            bundle.h_atomic, bundle.s_op,
            sigma0=2.2 * threshold,
            n_states=n_states,
            threshold=threshold,
            factorization=fac,
            symmetry="singlet",
        )
    spectra = build_radial_spectra(bundle.basis, bundle.potential, 0)
    sp = spectra[0]
    keep = sp.bound[:n_states]
    states = np.zeros((len(keep), len(bundle.channels), bundle.basis.n_splines), dtype=np.complex128)
    for i, j in enumerate(keep):
        states[i, 0] = sp.vectors[:, j]
    return EigenResult(sp.energies[keep], states, np.zeros(len(keep)))


# =====================================================================
# Commands
# =====================================================================

def _start_run(cfg: RunConfig, out_dir: Path | None) -> Path:
    run_dir = Path(out_dir) if out_dir is not None else resolve_output_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / "config.json", config_to_dict(cfg))
    return run_dir


def run_eigen(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Field-free bound levels of the configured system -> levels.csv + states.npz."""
    t0 = time.time()
    run_dir = _start_run(cfg, out_dir)
    diag: dict = {}

    if cfg.system.kind == "helium-ie":
        basis = build_radial_basis(cfg.basis.r_max, cfg.basis.n_splines, cfg.basis.order, cfg.basis.grading)
        rows = []
        arrays = {}
        for which, pot in (("sae", sae_potential), ("ion", lambda r: -cfg.system.z / r)):
            spectra = build_radial_spectra(basis, pot, cfg.channels.lmax)
            for l, sp in spectra.items():
                for i, j in enumerate(sp.bound):
                    rows.append((which, l, i, sp.energies[j]))
                arrays[f"{which}_l{l}_energies"] = sp.energies[sp.bound]
                arrays[f"{which}_l{l}_vectors"] = sp.vectors[:, sp.bound]
        write_csv(run_dir / "levels.csv", ["which", "l", "index", "energy"], rows)
        np.savez_compressed(run_dir / "states.npz", format_version=STATE_FORMAT_VERSION, **arrays)
        diag["n_levels"] = len(rows)
    elif cfg.system.kind == "helium-full":
        bundle = build_system(cfg)
        res = field_free_bound_states(bundle, cfg.analysis.n_bound)
        rows = [
            (i, e, r, exchange_character(x, bundle.channels))
            for i, (e, x, r) in enumerate(zip(res.energies, res.states, res.residuals))
        ]
        write_csv(run_dir / "levels.csv", ["index", "energy", "residual", "exchange"], rows)
        np.savez_compressed(
            run_dir / "states.npz",
            format_version=STATE_FORMAT_VERSION,
            energies=res.energies,
            states=res.states,
            residuals=res.residuals,
            config_json=json.dumps(config_to_dict(cfg)),
        )
        diag["ground_energy"] = float(res.energies[0]) if len(res.energies) else None
        diag["max_residual"] = float(res.residuals.max()) if len(res.residuals) else None
    else:
        basis = build_radial_basis(cfg.basis.r_max, cfg.basis.n_splines, cfg.basis.order, cfg.basis.grading)
        potential = system_potential(cfg.system)
        spectra = build_radial_spectra(basis, potential, cfg.channels.lmax)
        rows = []
        arrays = {}
        for l, sp in spectra.items():
            for i, j in enumerate(sp.bound):
                rows.append((l, i, sp.energies[j]))
            arrays[f"l{l}_energies"] = sp.energies[sp.bound]
            arrays[f"l{l}_vectors"] = sp.vectors[:, sp.bound]
        write_csv(run_dir / "levels.csv", ["l", "index", "energy"], rows)
        np.savez_compressed(run_dir / "states.npz", format_version=STATE_FORMAT_VERSION, **arrays)
        diag["ground_energy"] = float(spectra[0].energies[0])

    write_manifest(run_dir, {
        "command": "eigen",
        "status": "ok",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": diag,
    })
    return {"dir": run_dir, "diagnostics": diag}


def run_propagate(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Drive the ground state through the pulse -> trace.csv + final_state.npz."""
    t0 = time.time()
    run_dir = _start_run(cfg, out_dir)
    bundle = build_system(cfg)
    pulse = bundle.pulse

    ground = field_free_bound_states(bundle, 1)
    if not len(ground.energies):
        raise ConfigError("system.kind: no bound state found to start from")
    psi0 = np.array(ground.states[0], dtype=np.complex128)
    e_ground = float(ground.energies[0])

    cycle = pulse.duration / pulse.n_cycles
    n_total = int(round(cfg.propagation.steps_per_cycle * (pulse.n_cycles + cfg.propagation.post_cycles)))
    grid = TimeGrid(0.0, cycle * (pulse.n_cycles + cfg.propagation.post_cycles), n_total)

    fac = ChannelFactorization(bundle.basis, bundle.channels, bundle.potential, absorber=bundle.absorber)
    res = propagate(
        psi0,
        bundle.driven_hamiltonian(),
        bundle.s_op,
        grid,
        precond=fac.cayley_preconditioner(grid.dt),
        config=GmresConfig(rtol=cfg.propagation.gmres_rtol),
        observables={"autocorrelation": lambda p, t: abs(bundle.s_op.inner(psi0, p))},
        trace_stride=max(1, n_total // 2000),
    )

    write_csv(
        run_dir / "trace.csv",
        ["time", "norm_squared", "autocorrelation"],
        zip(res.times, res.norm_trace**2, res.observable_traces["autocorrelation"]),
    )
    save_state(run_dir / "final_state.npz", res.psi, cfg, grid.t_end)
    final_norm2 = float(res.norm_trace[-1] ** 2)
    diag = {
        "ground_energy": e_ground,
        "final_norm_squared": final_norm2,
        "unitarity_defect": abs(1.0 - final_norm2) if bundle.absorber is None else None,
        "gmres_total_iterations": res.gmres_total_iter,
        "gmres_max_iterations": res.gmres_max_iter,
        "n_steps": n_total,
        "pulse": derived_quantities(pulse),
    }
    write_manifest(run_dir, {
        "command": "propagate",
        "status": "ok",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": diag,
    })
    return {"dir": run_dir, "diagnostics": diag, "state": run_dir / "final_state.npz"}


def _require_matching_physics(cfg: RunConfig, embedded: RunConfig) -> None:
    for section in ("system", "basis", "channels", "pulse"):
        a, b = getattr(cfg, section), getattr(embedded, section)
        if a != b:
            raise ConfigError(
                f"{section}: config does not match the state file "
                f"(state was produced with {section}={asdict(b)})"
            )


def run_analyze(cfg: RunConfig, state_path: str | Path, out_dir: Path | None = None) -> dict:
    """Ionization bookkeeping of a saved final state -> report.json + spectra CSVs."""
    t0 = time.time()
    embedded, psi, t_final = load_state(state_path)
    _require_matching_physics(cfg, embedded)
    run_dir = _start_run(cfg, out_dir)
    pulse = pulse_from_config(cfg.pulse)
    bin_width = cfg.pulse.omega / cfg.analysis.bin_fraction

    if cfg.system.kind in ("hydrogenic", "sae"):
        report, metrics = _analyze_one_electron(cfg, psi, run_dir, pulse, bin_width)
    elif cfg.system.kind == "helium-full":
        report, metrics = _analyze_helium(cfg, psi, run_dir, pulse, bin_width)
    else:
        raise ConfigError("system.kind: helium-ie analysis comes out of the ie command")

    report["final_time"] = t_final
    write_json(run_dir / "report.json", report)
    write_manifest(run_dir, {
        "command": "analyze",
        "status": "ok",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": {"state_file": str(state_path)},
        "metrics": metrics,
    })
    return {"dir": run_dir, "report": report, "metrics": metrics}


def _analyze_one_electron(cfg, psi, run_dir, pulse, bin_width):
    basis = build_radial_basis(cfg.basis.r_max, cfg.basis.n_splines, cfg.basis.order, cfg.basis.grading)
    potential = system_potential(cfg.system)
    spectra = build_radial_spectra(basis, potential, cfg.channels.lmax)
    rep = one_electron_report(psi, basis, spectra, bin_width=bin_width, e_max=cfg.analysis.e_max)

    if rep["spectrum"] is not None:
        write_csv(
            run_dir / "spectrum.csv",
            ["energy", "density"],
            zip(rep["spectrum"].centers, rep["spectrum"].density),
        )
    write_csv(
        run_dir / "bound_populations.csv",
        ["energy", "population"],
        zip(rep["bound_energies"], rep["bound_populations"]),
    )
    ground_energy = float(spectra[0].energies[0])
    report = {
        "system": cfg.system.kind,
        "probabilities": {
            "p_total": rep["p_ion"],
            "p_ion": rep["p_ion"],
            "p_bound": rep["p_bound"],
            "p_ground": rep["p_ground"],
            "p_excite": rep["p_excite"],
        },
        "ground_energy": ground_energy,
        "ionization_potential": -ground_energy,
        "pulse": derived_quantities(pulse),
        "bin_width": bin_width,
    }
    metrics = {
        "p_total": rep["p_ion"],
        "p_single": rep["p_ion"],
        "p_double": 0.0,
        "p_excite": rep["p_excite"],
        "slow_fast_ratio": None,
    }
    return report, metrics


def _analyze_helium(cfg, psi, run_dir, pulse, bin_width):
    bundle = build_system(cfg)
    z = cfg.system.z
    bound2e = field_free_bound_states(bundle, cfg.analysis.n_bound)
    ion_bound = build_bound(bundle.basis, lambda r: -z / r, cfg.channels.lmax)
    single_cont = build_continuum(bundle.basis, lambda r: -(z - 1.0) / r, cfg.channels.lmax)
    double_cont = build_continuum(bundle.basis, lambda r: -z / r, cfg.channels.lmax)

    report_obj, raw = helium_ionization_report(
        psi, bundle.channels, bundle.basis, bundle.s_op,
        bound2e, ion_bound, single_cont, double_cont,
        bin_width=bin_width, e_max=cfg.analysis.e_max,
    )

    e_ground = float(bound2e.energies[0])
    ip1 = -0.5 * z**2 - e_ground          # first electron removal
    ip2 = -e_ground                        # both electrons removed
    omega = pulse.omega

    e_c = cfg.analysis.e_c if cfg.analysis.e_c is not None else 1.5 * omega - ip1
    ratio = None
    if e_c > 0 and raw.amps:
        try:
            ratio = slow_fast_ratio(raw, e_c=e_c)
        except ValueError:
            ratio = None

    if report_obj.single_spectrum is not None:
        write_csv(
            run_dir / "single_spectrum.csv",
            ["energy", "density"],
            zip(report_obj.single_spectrum.centers, report_obj.single_spectrum.density),
        )
    if report_obj.double_marginal is not None:
        write_csv(
            run_dir / "double_marginal.csv",
            ["energy", "density"],
            zip(report_obj.double_marginal.centers, report_obj.double_marginal.density),
        )
    if report_obj.double_joint is not None:
        centers = report_obj.double_joint.centers
        dens = report_obj.double_joint.density
        rows = (
            (centers[i], centers[j], dens[i, j])
            for i in range(len(centers))
            for j in range(len(centers))
        )
        write_csv(run_dir / "double_joint.csv", ["energy_1", "energy_2", "density"], rows)

    # total pair energy, for line positions of the two-electron escape
    pair_rows = _pair_energy_spectrum(raw, bin_width)
    if pair_rows is not None:
        write_csv(run_dir / "double_total.csv", ["energy", "density"], pair_rows)

    e_share = 0.5 * (2.0 * omega - ip2)
    angular_rows = None
    if cfg.analysis.angular and e_share > 0 and raw.amps:
        theta = np.linspace(0.0, np.pi, cfg.analysis.theta_points)
        try:
            dist = angular_distribution(raw, e1=e_share, e2=e_share, theta2=theta)
            angular_rows = list(zip(theta, dist))
            write_csv(run_dir / "angular.csv", ["theta", "density"], angular_rows)
        except ValueError as exc:
            logger.warning("angular distribution skipped: %s", exc)

    write_csv(
        run_dir / "bound_populations.csv",
        ["index", "energy", "population"],
        [
            (i, e, p)
            for i, (e, p) in enumerate(zip(
                bound2e.energies,
                np.abs([bundle.s_op.inner(x, psi) for x in bound2e.states]) ** 2,
            ))
        ],
    )

    scalars = report_obj.as_scalars()
    report = {
        "system": cfg.system.kind,
        "probabilities": scalars,
        "ground_energy": e_ground,
        "ionization_potentials": {"first": ip1, "double": ip2},
        "slow_fast": {"e_c": e_c, "ratio": ratio},
        "equal_sharing_energy": e_share,
        "pulse": derived_quantities(pulse),
        "bin_width": bin_width,
        "angular_backward_over_forward": (
            float(angular_rows[-1][1] / angular_rows[0][1])
            if angular_rows and angular_rows[0][1] > 0 else None
        ),
    }
    metrics = {
        "p_total": scalars["p_total"],
        "p_single": scalars["p_single"],
        "p_double": scalars["p_double"],
        "p_excite": scalars["p_excite"],
        "slow_fast_ratio": ratio,
    }
    return report, metrics


def _pair_energy_spectrum(raw, bin_width):
    energies = []
    weights = []
    for k, a in raw.amps.items():
        c = raw.channels.channels[k]
        e1, w1 = raw.energies[c.l1], raw.weights[c.l1]
        e2, w2 = raw.energies[c.l2], raw.weights[c.l2]
        p = np.abs(a) ** 2 * w1[:, None] * w2[None, :]
        energies.append((e1[:, None] + e2[None, :]).ravel())
        weights.append(p.ravel())
    if not energies:
        return None
    e_all = np.concatenate(energies)
    p_all = np.concatenate(weights)
    mask = p_all > 1e-14
    if not mask.any():
        return None
    e_top = float(e_all[mask].max())
    edges = np.arange(0.0, e_top + bin_width, bin_width)
    dens = _bin_levels(e_all, p_all, edges)
    return list(zip(0.5 * (edges[1:] + edges[:-1]), dens))


def run_kh(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Quiver-averaged potential table and dressed bound levels."""
    t0 = time.time()
    run_dir = _start_run(cfg, out_dir)
    pulse = pulse_from_config(cfg.pulse)
    alpha0 = pulse.alpha0
    z = cfg.system.z
    basis = build_radial_basis(cfg.basis.r_max, cfg.basis.n_splines, cfg.basis.order, cfg.basis.grading)

    lam_max = cfg.channels.lam_max if cfg.channels.lam_max is not None else max(8, 2 * cfg.channels.lmax)
    lam_cols = [lam for lam in range(0, min(lam_max, 10) + 1, 2)]
    r_grid = np.linspace(cfg.basis.r_max / 400.0, cfg.basis.r_max, 400)
    table = {f"v_lambda{lam}": kh_v_lambda(r_grid, lam, alpha0, z) for lam in lam_cols}
    table["fourier_lambda1_n1"] = kh_v_lambda_fourier(r_grid, 1, 1, alpha0, z)
    table["fourier_lambda0_n2"] = kh_v_lambda_fourier(r_grid, 0, 2, alpha0, z)
    write_csv(
        run_dir / "kh_potential.csv",
        ["r"] + list(table),
        zip(r_grid, *table.values()),
    )

    rows = []
    spec1 = kh_bound_spectrum(basis, alpha0, z, lmax=cfg.channels.lmax,
                              lam_max=lam_max, n_states=cfg.analysis.n_bound)
    for i, e in enumerate(spec1.energies):
        rows.append(("one-electron", i, e))
    diag = {"alpha0": alpha0, "dressed_1e_levels": len(spec1.energies)}
    if cfg.system.kind == "helium-full":
        spec2 = kh_two_electron_ground(basis, alpha0, z, lmax=cfg.channels.lmax, lam_max=lam_max)
        for i, e in enumerate(spec2.energies):
            rows.append(("two-electron-singlet", i, e))
        diag["dressed_2e_ground"] = float(spec2.energies[0]) if len(spec2.energies) else None
    write_csv(run_dir / "kh_levels.csv", ["kind", "index", "energy"], rows)

    write_manifest(run_dir, {
        "command": "kh",
        "status": "ok",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": diag,
    })
    return {"dir": run_dir, "diagnostics": diag}


def run_ie(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Independent-electron run -> ie_report.json + per-electron spectra."""
    t0 = time.time()
    if cfg.system.kind != "helium-ie":
        raise ConfigError(f"system.kind: ie command needs helium-ie, got {cfg.system.kind}")
    run_dir = _start_run(cfg, out_dir)
    basis = build_radial_basis(cfg.basis.r_max, cfg.basis.n_splines, cfg.basis.order, cfg.basis.grading)
    pulse = pulse_from_config(cfg.pulse)
    bin_width = cfg.pulse.omega / cfg.analysis.bin_fraction
    absorber = None
    if cfg.propagation.absorber_r is not None:
        absorber = (cfg.propagation.absorber_r, cfg.propagation.absorber_eta)

    result = iemodel.run_ie(
        basis, cfg.channels.lmax, pulse,
        z_ion=cfg.system.z,
        steps_per_cycle=cfg.propagation.steps_per_cycle,
        post_cycles=cfg.propagation.post_cycles,
        gmres_rtol=cfg.propagation.gmres_rtol,
        absorber=absorber,
        bin_width=bin_width,
    )

    for tag, outcome in (("sae", result.sae), ("ion", result.ion)):
        if outcome.spectrum is not None:
            write_csv(
                run_dir / f"{tag}_spectrum.csv",
                ["energy", "density"],
                zip(outcome.spectrum.centers, outcome.spectrum.density),
            )
    report = {
        "system": cfg.system.kind,
        "probabilities": result.as_scalars(),
        "electrons": {
            tag: {
                "ground_energy": o.ground_energy,
                "p_bound": o.p_bound,
                "p_ground": o.p_ground,
                "p_ion": o.p_ion,
                "p_excite": o.p_excite,
            }
            for tag, o in (("sae", result.sae), ("ion", result.ion))
        },
        "pulse": derived_quantities(pulse),
        "bin_width": bin_width,
    }
    write_json(run_dir / "ie_report.json", report)
    metrics = {
        "p_total": result.p_total,
        "p_single": result.p_single,
        "p_double": result.p_double,
        "p_excite": result.p_excite,
        "slow_fast_ratio": None,
    }
    write_manifest(run_dir, {
        "command": "ie",
        "status": "ok",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": {
            "gmres_total_iterations": result.sae.gmres_total_iter + result.ion.gmres_total_iter,
        },
        "metrics": metrics,
    })
    return {"dir": run_dir, "report": report, "metrics": metrics}


# =====================================================================
# Sweeps
# =====================================================================

def _point_config(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    pc = cfg.pulse
    if axis == "alpha0":
        pc = replace(pc, alpha0=float(value), e0=None)
    elif axis == "omega":
        pc = replace(pc, omega=float(value))
    elif axis == "cycles":
        if float(value) != int(value) or int(value) < 1:
            raise ConfigError(f"sweep values: cycles must be positive integers, got {value}")
        pc = replace(pc, n_cycles=int(value))
    else:
        raise ConfigError(f"sweep axis: must be one of {', '.join(_SWEEP_AXES)}, got {axis!r}")
    return replace(cfg, pulse=pc)


def _point_tag(axis: str, value: float) -> str:
    return f"{axis}_{value:g}"


def _run_sweep_point(cfg_dict: dict, axis: str, value: float, point_dir_str: str) -> dict:
    """One sweep point in isolation; returns the CSV row metrics."""
    cfg = config_from_dict(cfg_dict)
    point_dir = Path(point_dir_str)
    point_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        if cfg.system.kind == "helium-ie":
            out = run_ie(cfg, out_dir=point_dir / "ie")
            metrics = out["metrics"]
            subruns = ["ie"]
        else:
            prop = run_propagate(cfg, out_dir=point_dir / "propagate")
            ana = run_analyze(cfg, prop["state"], out_dir=point_dir / "analyze")
            metrics = ana["metrics"]
            subruns = ["propagate", "analyze"]
        payload = {
            "command": "sweep-point",
            "status": "ok",
            "config": config_to_dict(cfg),
            "wall_seconds": time.time() - t0,
            "metrics": metrics,
            "subruns": subruns,
            "axis": axis,
            "value": value,
        }
    except Exception as exc:  # recorded per point; the sweep continues
        logger.exception("sweep point %s=%s failed", axis, value)
        metrics = None
        payload = {
            "command": "sweep-point",
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
            "config": config_to_dict(cfg),
            "wall_seconds": time.time() - t0,
            "axis": axis,
            "value": value,
        }
    write_manifest(point_dir, payload)
    return {"value": value, "status": payload["status"], "metrics": metrics,
            "error": payload.get("error")}


def _completed_point(point_dir: Path) -> dict | None:
    """Metrics from a finished, intact point; None forces a (re)run."""
    man_path = point_dir / "manifest.json"
    if not man_path.is_file():
        return None
    try:
        man = json.loads(man_path.read_text())
    except json.JSONDecodeError:
        return None
    if man.get("status") != "ok":
        return None
    if verify_run_dir(point_dir):
        return None
    return {"value": man.get("value"), "status": "ok", "metrics": man.get("metrics"), "error": None}


def run_sweep(
    cfg: RunConfig,
    axis: str,
    values,
    out_dir: Path | None = None,
    jobs: int = 1,
) -> dict:
    """Ordered work queue over pulse-parameter values -> sweep.csv.

    Finished points (intact manifest, status ok) are skipped on resume, so a
    killed sweep completes the remaining points only.  Failures are recorded
    per point and do not stop the queue.
    """
    t0 = time.time()
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep values: empty list")
    if not all(np.isfinite(v) and v > 0 for v in values):
        raise ConfigError("sweep values: all values must be finite and positive")
    run_dir = _start_run(cfg, out_dir)

    work = []
    rows: dict[float, dict] = {}
    for v in values:
        tag = _point_tag(axis, v)
        point_dir = run_dir / "points" / tag
        done = _completed_point(point_dir)
        if done is not None:
            logger.info("sweep point %s already complete; skipping", tag)
            rows[v] = done
        else:
            pcfg = _point_config(cfg, axis, v)
            pcfg = replace(pcfg, output=OutputConfig(directory=str(point_dir)))
            work.append((config_to_dict(pcfg), axis, v, str(point_dir)))

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_run_sweep_point, *zip(*work)):
                rows[out["value"]] = out
    else:
        for args in work:
            out = _run_sweep_point(*args)
            rows[out["value"]] = out

    header = [axis, "p_total", "p_single", "p_double", "p_excite", "slow_fast_ratio", "status"]
    csv_rows = []
    for v in values:
        row = rows[v]
        m = row["metrics"] or {}
        csv_rows.append((
            v,
            m.get("p_total"), m.get("p_single"), m.get("p_double"), m.get("p_excite"),
            m.get("slow_fast_ratio"),
            row["status"],
        ))
    write_csv(run_dir / "sweep.csv", header, csv_rows)

    n_failed = sum(1 for r in rows.values() if r["status"] != "ok")
    write_manifest(run_dir, {
        "command": "sweep",
        "status": "ok" if n_failed == 0 else "partial",
        "config": config_to_dict(cfg),
        "wall_seconds": time.time() - t0,
        "diagnostics": {"axis": axis, "values": values, "failed_points": n_failed},
        "subruns": [f"points/{_point_tag(axis, v)}" for v in values],
    })
    return {"dir": run_dir, "rows": csv_rows, "failed": n_failed}
