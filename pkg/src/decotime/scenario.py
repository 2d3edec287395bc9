"""Scenario files, the scenario runner, and deterministic report writing.

Scenarios are JSON documents validated against a strict schema: unknown
fields are rejected. Reports and CSV files print every float with 17
significant digits so that a run can be reproduced byte for byte.
Non-finite floats, such as the infinite decoherence time of a free system,
are written as the strings "inf", "-inf" and "nan".
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt
from pydantic import ValidationError as PydanticValidationError

from . import decofit, models
from .constants import HBAR
from .cpoles import PoleLocation
from .errors import ConvergenceError, DecotimeError, FitInputError, PoleSearchError, ScenarioError
from .estimate import DecoherenceEstimate, relative_difference
from .oscint import QuadratureConfig, fluctuating_series
from .vanhove import (
    VanHoveObservable,
    VanHoveState,
    constant_kernel,
    gaussian_nu,
    gaussian_packet,
    grid_kernel,
    lorentzian_nu,
    normalized_density,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONVERGENCE = 2


# --- schema -----------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class QuadratureSpec(_Strict):
    abs_tol: PositiveFloat = 1e-12
    rel_tol: PositiveFloat = 1e-8
    max_subdivisions: PositiveInt = 14
    lambda_panels: PositiveInt = 16

    def config(self) -> QuadratureConfig:
        return QuadratureConfig(self.abs_tol, self.rel_tol, self.max_subdivisions, self.lambda_panels)


class EvolutionSpec(_Strict):
    t_max_factor: PositiveFloat = 20.0
    points: int = Field(64, ge=8)


class FriedrichsSpec(_Strict):
    kind: Literal["friedrichs"]
    Omega: PositiveFloat = 1.0
    g: NonNegativeFloat
    omega_max: Optional[PositiveFloat] = None


class ThermalSpec(_Strict):
    kind: Literal["thermal"]
    T: PositiveFloat
    lambda_: NonNegativeFloat = Field(1.0, alias="lambda")
    n_max: PositiveInt = 1


class MacroscopicSpec(_Strict):
    kind: Literal["macroscopic"]
    N: Optional[PositiveFloat] = None
    V_i: Optional[PositiveFloat] = None
    M: Optional[PositiveFloat] = None
    L: Optional[PositiveFloat] = None
    Upsilon: Optional[PositiveFloat] = None
    T: Optional[PositiveFloat] = None


class EinselectionSpec(_Strict):
    kind: Literal["einselection"]
    gamma0_inv: PositiveFloat
    L0: PositiveFloat
    M: PositiveFloat
    T: PositiveFloat


class AggregateSpec(_Strict):
    N: PositiveFloat
    V_i: PositiveFloat


class TwoStageSpec(_Strict):
    kind: Literal["two_stage"]
    macro: AggregateSpec
    micro_coupling: NonNegativeFloat


class GridSpec(_Strict):
    omegas: list[float] = Field(min_length=2)
    values: list[list[float]]


class CustomKernelSpec(_Strict):
    """Kernel-family state paired with the unit observable.

    ``scale`` is gamma for lorentzian_nu, sigma for gaussian_nu and the
    packet spread for separable (a Gaussian wave packet).
    """

    kind: Literal["custom_kernel"]
    family: Literal["lorentzian_nu", "gaussian_nu", "separable", "grid"]
    scale: Optional[PositiveFloat] = None
    center: PositiveFloat = 10.0
    width: PositiveFloat = 1.0
    omega_max: PositiveFloat = 50.0
    grid: Optional[GridSpec] = None


ModelSpec = Annotated[
    Union[FriedrichsSpec, ThermalSpec, MacroscopicSpec, EinselectionSpec, TwoStageSpec, CustomKernelSpec],
    Field(discriminator="kind"),
]


class Scenario(_Strict):
    name: str = Field(min_length=1)
    model: ModelSpec
    evolution: Optional[EvolutionSpec] = None
    quadrature: QuadratureSpec = QuadratureSpec()
    outputs: list[Literal["report", "series", "poles"]] = Field(default_factory=lambda: ["report"], min_length=1)


# --- deterministic serialization ---------------------------------------------

def _float_text(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj: Any) -> Any:
    """Reduce numpy scalars, complex numbers and records to JSON-ready values."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, PoleLocation):
        return pole_record(obj)
    if isinstance(obj, DecoherenceEstimate):
        return estimate_record(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _float_text(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(_plain(obj), 0) + "\n"


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioError
        Unreadable file, malformed JSON (with line and column), or schema
        violations (naming each offending field).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data, str(path))


def scenario_from_dict(data: Any, origin: str = "<scenario>") -> Scenario:
    try:
        return Scenario.model_validate(data)
    except PydanticValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"{loc}: {err['msg']}")
        raise ScenarioError(f"{origin}: invalid scenario\n  " + "\n  ".join(lines)) from exc


def scenario_dict(sc: Scenario) -> dict:
    return sc.model_dump(mode="python", by_alias=True, exclude_none=True)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario_dict(sc)))


# --- records -----------------------------------------------------------------

def pole_record(p: PoleLocation) -> dict:
    return {
        "re_eV": p.position.real,
        "im_eV": p.position.imag,
        "residue_re": p.residue.real,
        "residue_im": p.residue.imag,
        "multiplicity": p.multiplicity,
        "source": p.source,
    }


def estimate_record(e: DecoherenceEstimate, label: str | None = None) -> dict:
    rec = {"method": e.method, "t_D": e.t_D, "gamma": e.gamma, "diagnostics": _plain(e.diagnostics)}
    if label:
        rec["label"] = label
    return rec


@dataclass
class RunReport:
    scenario: str
    kind: str
    estimates: list[tuple[str, DecoherenceEstimate]] = field(default_factory=list)
    reference_values: list[dict] = field(default_factory=list)
    poles: list[PoleLocation] = field(default_factory=list)
    series: Any = None
    fit: Any = None
    extra: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    convergence_warning: bool = False

    @property
    def status(self) -> int:
        if self.errors:
            return EXIT_ERROR
        if self.convergence_warning:
            return EXIT_CONVERGENCE
        return EXIT_OK

    def agreement(self) -> dict[str, float]:
        """Relative t_D difference for every pair of estimates."""
        out = {}
        for i, (la, a) in enumerate(self.estimates):
            for lb, b in self.estimates[i + 1:]:
                out[f"{la}|{lb}"] = relative_difference(a, b)
        return out

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "status": self.status,
            "estimates": [estimate_record(e, label) for label, e in self.estimates],
            "agreement": self.agreement(),
            "reference_values": self.reference_values,
            "poles": [pole_record(p) for p in self.poles],
            "warnings": list(self.warnings),
            "errors": list(self.errors),
            **_plain(self.extra),
        }


def _reference(quantity: str, quoted: float, computed: float, note: str = "") -> dict:
    within = bool(math.isfinite(computed) and computed > 0 and abs(math.log10(computed / quoted)) <= 1.0)
    rec = {"quantity": quantity, "quoted": quoted, "computed": computed, "within_one_decade": within}
    if note or not within:
        rec["note"] = note or "computed value differs from the quoted order of magnitude by more than one decade"
    return rec


# --- runner ------------------------------------------------------------------

def _custom_state(spec: CustomKernelSpec):
    W = spec.omega_max
    if spec.family != "grid" and spec.scale is None:
        raise ScenarioError(f"model.scale is required for family {spec.family!r}")
    if spec.family == "lorentzian_nu":
        kern = lorentzian_nu(spec.scale, spec.center, spec.width, omega_max=W)
    elif spec.family == "gaussian_nu":
        kern = gaussian_nu(spec.scale, spec.center, spec.width, omega_max=W)
    elif spec.family == "separable":
        kern = gaussian_packet(spec.center, spec.scale, omega_max=W)
    else:
        if spec.grid is None:
            raise ScenarioError("model.grid is required for family 'grid'")
        kern = grid_kernel(spec.grid.omegas, spec.grid.values)
        W = kern.omega_max
    state = VanHoveState(normalized_density(lambda w: math.exp(-w), W), kern)
    obs = VanHoveObservable(lambda w: 1.0, constant_kernel(1.0, W))
    return state, obs


def _evolve(report: RunReport, sc: Scenario, state, obs, t_scale: float, threads: int):
    ev = sc.evolution
    times = np.linspace(0.0, ev.t_max_factor * t_scale, ev.points)
    series = fluctuating_series(state, obs, times, sc.quadrature.config(), threads=threads)
    report.series = series
    n_failed = int(np.count_nonzero(series.failed))
    if n_failed:
        report.convergence_warning = True
        report.warnings.append(f"{n_failed} series point(s) missed the quadrature tolerance")
    report.extra["series_summary"] = {
        "points": int(series.times.size),
        "t_max": float(series.times[-1]),
        "constant_part": series.constant_part,
        "abs_at_0": float(abs(series.values[0])),
        "max_error": float(np.max(series.errors)),
        "failed_points": n_failed,
    }
    try:
        fit = decofit.fit_series(series)
    except FitInputError:
        if not n_failed:
            raise
        # the fit failed only because quadrature failures left too few points
        report.warnings.append("decay fit skipped: too few converged series points")
        return
    report.fit = fit
    report.warnings.extend(fit.warnings)
    est = decofit.estimate_from_fit(fit, background_ratio=decofit.background_ratio(series, fit))
    est.diagnostics["envelope_ratios"] = decofit.envelope_ratios(series, est.t_D)
    report.estimates.append(("fit", est))


def _run_friedrichs(report, sc, spec: FriedrichsSpec, threads):
    m = models.FriedrichsModel(spec.Omega, spec.g, math.inf if spec.omega_max is None else spec.omega_max)
    pole = models.friedrichs_decoherence_time(m)
    formula = models.friedrichs_formula_time(m)
    report.estimates += [("pole", pole), ("formula", formula)]
    report.poles += pole.diagnostics.get("poles", [])
    report.reference_values += [
        _reference("t_D for a characteristic energy 2 pi |V|^2 = 1 eV (s)", 1e-15, HBAR / 1.0),
        _reference("t_D for gamma = 0.1 MeV (s)", 1e-20, HBAR / 1e5),
    ]
    if sc.evolution is not None:
        if pole.is_sentinel:
            report.warnings.append("no resonance pole: free evolution has no fluctuating decay, series skipped")
        else:
            state, obs = models.friedrichs_pole_state(m, pole)
            _evolve(report, sc, state, obs, pole.t_D, threads)


def _run_thermal(report, sc, spec: ThermalSpec, threads):
    m = models.ThermalBathModel(spec.T, spec.lambda_, spec.n_max)
    poles = models.thermal_pole_grid(m)
    located = models.locate_thermal_poles(m)
    formula = models.thermal_decoherence_time(m)
    pole = DecoherenceEstimate.from_gamma(located[0].position.imag, "pole")
    report.estimates += [("formula", formula), ("pole", pole)]
    report.poles += poles
    report.extra["located_poles"] = [pole_record(p) for p in located]
    report.reference_values += [
        _reference(
            "single-particle t_D near T = 100 K (s)", 1e-13, formula.t_D,
            "hbar/(4 pi k T) is the reported value; the quoted 1e-13 s is not reproduced by that formula",
        ),
        _reference("mol-particle t_D, N = 1e24 (s)", 1e-37, models.nbody_scaled_time(formula, 1e24).t_D),
    ]
    if sc.evolution is not None:
        report.warnings.append("time evolution is not available for the thermal model; series skipped")


def _run_macroscopic(report, sc, spec: MacroscopicSpec, threads):
    body = models.MacroscopicBody(spec.N, spec.V_i, spec.M, spec.L, spec.Upsilon, spec.T)
    if spec.N is not None and spec.V_i is not None:
        e = models.nbody_decoherence_time(body)
        report.estimates.append(("formula:n_body", e))
        report.reference_values.append(_reference("t_D of a one-mol body, V_i = 1 eV (s)", 1e-39, e.t_D))
    if None not in (spec.M, spec.L, spec.Upsilon):
        report.extra["particle_number"] = models.particle_number_from_action(body)
        if spec.T is not None:
            report.estimates.append(("formula:action", models.macroscopic_decoherence_time(body)))
    if not report.estimates:
        raise ScenarioError("macroscopic model needs (N, V_i) or (M, L, Upsilon, T)")


def _run_einselection(report, sc, spec: EinselectionSpec, threads):
    es = models.EinselectionScenario(spec.gamma0_inv, spec.L0, spec.M, spec.T)
    body = models.MacroscopicBody(M=spec.M, L=spec.L0, Upsilon=spec.gamma0_inv, T=spec.T)
    report.estimates += [
        ("formula:de_broglie", models.einselection_comparison(es)),
        ("formula:action", models.macroscopic_decoherence_time(body)),
    ]


def _run_two_stage(report, sc, spec: TwoStageSpec, threads):
    import warnings

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = models.TwoStageModel(models.MacroscopicBody(N=spec.macro.N, V_i=spec.macro.V_i), spec.micro_coupling)
    report.warnings.extend(str(w.message) for w in caught)
    deco, relax = models.two_stage_times(m)
    report.estimates += [("formula:decoherence", deco), ("formula:relaxation", relax)]
    report.extra["stage_ratio"] = {
        "relax_over_deco": relax.t_D / deco.t_D,
        "coupling_ratio": m.aggregate / spec.micro_coupling if spec.micro_coupling > 0 else math.inf,
    }
    report.reference_values += [
        _reference("decoherence stage t_D (s)", 1e-39, deco.t_D),
        _reference("relaxation stage t_D (s)", 1.0, relax.t_D),
    ]


def _run_custom(report, sc, spec: CustomKernelSpec, threads):
    state, obs = _custom_state(spec)
    pole = models.kernel_decoherence_time(state, obs)
    report.estimates.append(("pole", pole))
    report.poles += pole.diagnostics.get("poles", [])
    if sc.evolution is not None:
        scale = pole.t_D if not pole.is_sentinel else HBAR / models.kernel_scale(state, obs)
        _evolve(report, sc, state, obs, scale, threads)


_RUNNERS = {
    "friedrichs": _run_friedrichs,
    "thermal": _run_thermal,
    "macroscopic": _run_macroscopic,
    "einselection": _run_einselection,
    "two_stage": _run_two_stage,
    "custom_kernel": _run_custom,
}


def _fmt_row(values) -> list[str]:
    out = []
    for v in values:
        if isinstance(v, float):
            out.append(_float_text(v).strip('"'))
        else:
            out.append(str(v))
    return out


def series_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_seconds", "re", "im", "abs"])
    for t, v in zip(series.times, series.values):
        w.writerow(_fmt_row([float(t), float(v.real), float(v.imag), float(abs(v))]))
    return buf.getvalue()


def poles_csv(poles) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re_eV", "im_eV", "residue_re", "residue_im", "multiplicity", "source"])
    for p in poles:
        w.writerow(_fmt_row([p.position.real, p.position.imag, p.residue.real, p.residue.imag,
                             p.multiplicity, p.source]))
    return buf.getvalue()


def execute(sc: Scenario, threads: int = 1) -> RunReport:
    """Run a scenario in memory; module errors are captured in the report."""
    report = RunReport(scenario=sc.name, kind=sc.model.kind)
    try:
        _RUNNERS[sc.model.kind](report, sc, sc.model, threads)
    except (ConvergenceError, PoleSearchError) as exc:
        report.convergence_warning = True
        report.warnings.append(f"{type(exc).__name__}: {exc}")
    except (DecotimeError, ValueError, ArithmeticError) as exc:
        report.errors.append({"type": type(exc).__name__, "message": str(exc)})
    return report


def run_scenario(sc: Scenario, out_dir, threads: int = 1) -> RunReport:
    """Run a scenario and write its outputs into ``out_dir``.

    ``report.json`` is written whenever requested and always on failure;
    ``series.csv`` when a time evolution was computed; ``poles.csv`` when
    requested. The exit status is ``report.status``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = execute(sc, threads)
    if "report" in sc.outputs or report.errors:
        (out / "report.json").write_text(dumps(report.as_dict()))
    if "series" in sc.outputs and report.series is not None:
        (out / "series.csv").write_text(series_csv(report.series))
    if "poles" in sc.outputs:
        (out / "poles.csv").write_text(poles_csv(report.poles))
    return report


def resolve_threads(requested: int | None) -> int:
    """Thread count: DECOTIME_THREADS overrides the requested value."""
    env = os.environ.get("DECOTIME_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ScenarioError(f"DECOTIME_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ScenarioError("DECOTIME_THREADS must be >= 1")
        return value
    return max(1, int(requested or 1))
