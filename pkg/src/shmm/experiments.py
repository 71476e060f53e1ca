"""Experiment configuration, orchestration and result tables.

An experiment file is TOML with an ``[experiment]`` table; every omitted key
falls back to the defaults below (``kappa = 1``, ``alpha = 5``, two levels,
256x256 DNS up to ``t = 0.1``). Named presets ``paper-4.1`` .. ``paper-4.4``
ship inside the package.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from shmm import __version__, io, kernels
from shmm.cell import MicroSolveConfig, cell_problem_oracle
from shmm.core import (
    AssemblyStats,
    EffDiffField,
    SHMMConfig,
    Work,
    assemble_macro_diffusivity,
    build_hierarchy,
    effdiff_recursive,
    shmm_effdiff,
)
from shmm.fields import Grid2D, SpectralField2D
from shmm.flowgen import StreamSpec, decompose, gen_cellular, generate
from shmm.pde import RunSummary, SolveSetup, dns_grid, dns_solve, macro_solve, midline_profile, mixing_width, profile_metrics
from shmm.tensor import DiffTensor2

EXPERIMENT_IDS = ("shear", "two-scale", "off-diagonal", "continuous", "custom")
PRESETS = ("paper-4.1", "paper-4.2", "paper-4.3", "paper-4.4")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class DNSConfig:
    enabled: bool = False
    n: int = 256
    dt: float = 3e-6
    t_end: float = 0.1
    min_points_per_wavelength: float = 10.0


@dataclass(frozen=True)
class CheckConfig:
    """Thresholds used by ``--check``; ``None`` skips that check."""

    rel_err_max: float | None = None
    profile_l2_max: float | None = None
    baseline_factor: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "custom"
    name: str = "custom"
    stream: StreamSpec = field(default_factory=StreamSpec)
    kappa: float = 1.0
    alpha: int = 5
    depth: int = 2
    macro_n: int = 10
    macro_points: tuple[tuple[int, int], ...] | None = None
    points_per_level: int = 64
    micro: MicroSolveConfig = field(default_factory=MicroSolveConfig)
    net_mode: str = "base"
    oracle_n: int = 256
    dns: DNSConfig = field(default_factory=DNSConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    output_dir: str = "."

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_IDS:
            raise ConfigError(f"experiment must be one of {EXPERIMENT_IDS}, got {self.experiment!r}")
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        if self.macro_n < 1:
            raise ConfigError("macro_n must be >= 1")
        if self.macro_points is not None:
            pts = tuple((int(i), int(j)) for i, j in self.macro_points)
            for i, j in pts:
                if not (0 <= i < self.macro_n and 0 <= j < self.macro_n):
                    raise ConfigError(f"macro point {(i, j)} outside the {self.macro_n}x{self.macro_n} grid")
            object.__setattr__(self, "macro_points", pts)

    @property
    def shmm(self) -> SHMMConfig:
        return SHMMConfig(
            alpha=self.alpha,
            depth=self.depth,
            points_per_level=self.points_per_level,
            micro=self.micro,
            net_mode=self.net_mode,
            kappa=self.kappa,
        )

    @property
    def base(self) -> DiffTensor2:
        return DiffTensor2.iso(self.kappa)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        d = dict(d.get("experiment", d))
        d["experiment"] = d.pop("id", d.get("experiment", "custom"))
        sub = {"stream": StreamSpec, "micro": MicroSolveConfig, "dns": DNSConfig, "check": CheckConfig}
        try:
            for key, typ in sub.items():
                if key in d:
                    d[key] = typ(**d[key]) if key != "stream" else StreamSpec.from_dict(d[key])
            if "macro_points" in d:
                mp = d["macro_points"]
                d["macro_points"] = None if mp == "all" else tuple(tuple(p) for p in mp)
            unknown = set(d) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, text: str) -> ExperimentConfig:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
        if "experiment" not in data:
            raise ConfigError("config needs an [experiment] table")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            return cls.from_toml(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def preset(cls, name: str) -> ExperimentConfig:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {PRESETS}")
        text = resources.files("shmm.presets").joinpath(f"{name}.toml").read_text()
        return cls.from_toml(text)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["stream"] = self.stream.to_dict()
        d["macro_points"] = None if self.macro_points is None else [list(p) for p in self.macro_points]
        d.pop("output_dir")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ResultRecord:
    experiment: str
    name: str
    shmm: DiffTensor2 | None = None
    oracle: DiffTensor2 | None = None
    rel_err: tuple[float, float] | None = None
    shmm_spread: float | None = None
    profile: dict[str, float] = field(default_factory=dict)
    wall_times: dict[str, float] = field(default_factory=dict)
    fingerprint: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def wall_time(self) -> float:
        return float(sum(self.wall_times.values()))

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "experiment": self.experiment,
            "name": self.name,
            "shmm": None if self.shmm is None else list(self.shmm.as_tuple()),
            "oracle": None if self.oracle is None else list(self.oracle.as_tuple()),
            "rel_err": None if self.rel_err is None else list(self.rel_err),
            "shmm_spread": self.shmm_spread,
            "profile": dict(self.profile),
            "fingerprint": dict(self.fingerprint),
            "errors": dict(self.errors),
            "notes": list(self.notes),
        }
        if timing:
            d["wall_times"] = dict(self.wall_times)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ResultRecord:
        d = json.loads(text)
        t = lambda v: None if v is None else DiffTensor2(*v)  # noqa: E731
        return cls(
            experiment=d["experiment"],
            name=d["name"],
            shmm=t(d["shmm"]),
            oracle=t(d["oracle"]),
            rel_err=None if d["rel_err"] is None else tuple(d["rel_err"]),
            shmm_spread=d["shmm_spread"],
            profile=d["profile"],
            wall_times=d.get("wall_times", {}),
            fingerprint=d["fingerprint"],
            errors=d["errors"],
            notes=d["notes"],
        )


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _stage(rec: ResultRecord, name: str, fn, *args, **kw):
    try:
        out, dt = _timed(fn, *args, **kw)
    except Exception as exc:  # recorded per stage; the caller decides the exit status
        rec.errors[name] = f"{type(exc).__name__}: {exc}"
        return None
    rec.wall_times[name] = dt
    return out


def _write_profile(path: Path, prof: tuple[np.ndarray, np.ndarray]) -> None:
    path.write_text(io.profile_to_csv(*prof))


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ResultRecord:
    """Generate, decompose, homogenize and (optionally) simulate one experiment.

    Every artifact is written under ``out_dir``; a failing stage is recorded in
    ``record.errors`` and later stages that depend on it are skipped.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = ResultRecord(cfg.experiment, cfg.name)
    rec.fingerprint = {"version": __version__, "backend": kernels.BACKEND, "config": cfg.fingerprint()}
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    psi = _stage(rec, "generate", generate, cfg.stream)
    if psi is None:
        _finish(rec, out)
        return rec
    io.write_spectral(out / "psi.csv", psi)
    if cfg.depth > 1 and not psi.is_zero():
        decomp = _stage(rec, "decompose", decompose, psi, cfg.alpha, cfg.depth - 1)
        if decomp is not None:
            for ell, lev in enumerate(decomp.levels, start=1):
                for tag, comp in lev.components().items():
                    io.write_spectral(out / f"{tag}_L{ell}.csv", comp)

    macro_grid = Grid2D.unit_periodic(cfg.macro_n)
    stats = AssemblyStats()
    pts = None if cfg.macro_points is None else list(cfg.macro_points)
    # SHMM and the oracle share no state
    with ThreadPoolExecutor(max_workers=2) as pool:
        f_shmm = pool.submit(
            _stage, rec, "shmm", assemble_macro_diffusivity, psi, macro_grid, cfg.base, cfg.shmm, pts, stats
        )
        f_orc = pool.submit(_stage, rec, "oracle", cell_problem_oracle, psi, cfg.base, cfg.oracle_n)
        field_k: EffDiffField | None = f_shmm.result()
        rec.oracle = f_orc.result()
    if field_k is not None:
        (out / "effdiff_field.csv").write_text(field_k.to_csv())
        rec.shmm = field_k.mean()
        rec.shmm_spread = field_k.spread()
        (out / "shmm_tensor.csv").write_text(io.tensor_to_csv(rec.shmm))
    if rec.oracle is not None:
        (out / "oracle_tensor.csv").write_text(io.tensor_to_csv(rec.oracle))
    if rec.shmm is not None and rec.oracle is not None:
        rec.rel_err = rec.shmm.rel_diag_errors(rec.oracle)

    if cfg.dns.enabled:
        _run_profiles(cfg, psi, rec, out, field_k)
    _finish(rec, out)
    return rec


def _run_profiles(cfg: ExperimentConfig, psi: SpectralField2D, rec: ResultRecord, out: Path, field_k) -> None:
    g = dns_grid(cfg.dns.n)
    setup = SolveSetup(g, t_end=cfg.dns.t_end, dt=cfg.dns.dt, min_points_per_wavelength=cfg.dns.min_points_per_wavelength)
    macro_setup = replace(setup, dt=None)
    K = rec.shmm
    if field_k is not None and field_k.computed.all():
        K = field_k
    summaries = {name: RunSummary() for name in ("dns", "macro", "baseline")}
    with ThreadPoolExecutor(max_workers=3) as pool:
        jobs = {
            "dns": pool.submit(_stage, rec, "dns", dns_solve, psi, cfg.kappa, setup, summaries["dns"]),
            "baseline": pool.submit(_stage, rec, "baseline", macro_solve, cfg.base, setup, summaries["baseline"]),
        }
        if K is not None:
            jobs["macro"] = pool.submit(_stage, rec, "macro", macro_solve, K, macro_setup, summaries["macro"])
        fields = {k: j.result() for k, j in jobs.items()}
    profiles = {}
    for name, u in fields.items():
        if u is None:
            continue
        io.write_grid_field(out / f"{name}_field.csv", u)
        profiles[name] = midline_profile(u, average=True)
        _write_profile(out / f"{name}_profile_avg.csv", profiles[name])
        _write_profile(out / f"{name}_profile_mid.csv", midline_profile(u))
    (out / "run_summary.json").write_text(
        json.dumps({k: s.to_dict(timing=False) for k, s in summaries.items() if k in fields}, indent=2, sort_keys=True) + "\n"
    )
    if "dns" in profiles:
        s = summaries["dns"]
        rec.notes += s.notes
        rec.profile["dns_min"], rec.profile["dns_max"] = s.u_min, s.u_max
        rec.profile["mixing_width_dns"] = mixing_width(profiles["dns"])
        for name in ("macro", "baseline"):
            if name in profiles:
                l2, mx = profile_metrics(profiles[name], profiles["dns"])
                rec.profile[f"{name}_l2"], rec.profile[f"{name}_max"] = l2, mx
                rec.profile[f"mixing_width_{name}"] = mixing_width(profiles[name])


def _finish(rec: ResultRecord, out: Path) -> None:
    (out / "record.json").write_text(rec.to_json(timing=False))
    (out / "timing.json").write_text(json.dumps(rec.wall_times, indent=2, sort_keys=True) + "\n")


def check_record(rec: ResultRecord, check: CheckConfig) -> list[str]:
    """Threshold misses for ``--check``; empty when everything passes."""
    miss = []
    if check.rel_err_max is not None:
        if rec.rel_err is None:
            miss.append("relative error unavailable")
        elif max(rec.rel_err) > check.rel_err_max:
            miss.append(f"rel_err {max(rec.rel_err):.3e} > {check.rel_err_max}")
    if check.profile_l2_max is not None:
        l2 = rec.profile.get("macro_l2")
        if l2 is None:
            miss.append("profile comparison unavailable")
        elif l2 > check.profile_l2_max:
            miss.append(f"macro profile L2 {l2:.3e} > {check.profile_l2_max}")
    if check.baseline_factor is not None:
        l2, b = rec.profile.get("macro_l2"), rec.profile.get("baseline_l2")
        if l2 is None or b is None:
            miss.append("baseline comparison unavailable")
        elif b < check.baseline_factor * l2:
            miss.append(f"baseline L2 {b:.3e} < {check.baseline_factor} x macro L2 {l2:.3e}")
    return miss


# --- tables ---------------------------------------------------------------------

TABLE_COLUMNS = ("experiment", "k11_shmm", "k22_shmm", "k11_oracle", "k22_oracle", "rel_err_11", "rel_err_22", "wall_time_s")


def _row(rec: ResultRecord) -> list[str]:
    nan = float("nan")
    s = rec.shmm.as_tuple() if rec.shmm else (nan, nan, nan)
    o = rec.oracle.as_tuple() if rec.oracle else (nan, nan, nan)
    e = rec.rel_err if rec.rel_err else (nan, nan)
    return [rec.name, f"{s[0]:.6f}", f"{s[2]:.6f}", f"{o[0]:.6f}", f"{o[2]:.6f}", f"{e[0]:.3e}", f"{e[1]:.3e}", f"{rec.wall_time:.2f}"]


def compare_tables(records: list[ResultRecord]) -> tuple[str, str]:
    """Aligned text table and machine CSV, one row per record."""
    if not records:
        raise ValueError("no records to tabulate")
    rows = [list(TABLE_COLUMNS)] + [_row(r) for r in records]
    widths = [max(len(r[c]) for r in rows) for c in range(len(TABLE_COLUMNS))]
    text = "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows) + "\n"
    csv = "\n".join(",".join(r) for r in rows) + "\n"
    return text, csv


# --- scaling --------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingPoint:
    depth: int
    wall_time: float
    grid_points: int
    hmm_calls: int
    flat_points: int
    tensor: DiffTensor2


def scaling_flow(depth: int, alpha: int = 5, amplitude: float = 1.0 / 3.0, m0: int = 5) -> SpectralField2D:
    """Cellular modes at wavenumbers ``m0 * alpha**l`` for ``l < depth``."""
    return gen_cellular([(amplitude, m0 * alpha**ell, m0 * alpha**ell) for ell in range(depth)])


def scaling_probe(
    depths: list[int],
    cfg: SHMMConfig = SHMMConfig(),
    macro_spacing: float = 0.1,
    center: tuple[float, float] = (0.1, 0.1),
    kappa: float = 1.0,
) -> list[ScalingPoint]:
    """Time the composition for flows with exactly ``depth`` scales.

    A flat grid resolving the finest scale over the level-1 domain would need
    ``(points_per_level * alpha**(depth-1))**2`` points.
    """
    if list(depths) != sorted(depths) or not depths or depths[0] < 1:
        raise ValueError("depths must be ascending positive integers")
    base = DiffTensor2.iso(kappa)
    out = []
    for d in depths:
        psi = scaling_flow(d, cfg.alpha)
        c = replace(cfg, depth=d)
        hier = build_hierarchy(macro_spacing, center, cfg.alpha, d, cfg.points_per_level)
        work = Work()
        t0 = time.perf_counter()
        if d == 1:
            k = shmm_effdiff(psi, base, hier, c, work)
        else:
            k = effdiff_recursive(decompose(psi, cfg.alpha, d - 1), base, hier, c, work)
        dt = time.perf_counter() - t0
        flat = (cfg.points_per_level * cfg.alpha ** (d - 1)) ** 2
        out.append(ScalingPoint(d, dt, work.grid_points, work.hmm_calls, flat, k))
    return out


def scaling_csv(points: list[ScalingPoint]) -> str:
    lines = ["depth,wall_time_s,grid_points,hmm_calls,flat_points,k11,k12,k22"]
    for p in points:
        lines.append(f"{p.depth},{p.wall_time!r},{p.grid_points},{p.hmm_calls},{p.flat_points},{p.tensor.to_csv()}")
    return "\n".join(lines) + "\n"
