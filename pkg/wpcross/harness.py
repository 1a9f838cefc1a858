from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from loguru import logger

from wpcross.classical import integrate_flow
from wpcross.landau_zener import LZParameters, coeff_a, coeff_b, lz_transfer_matrix, write_lz_table
from wpcross.lib.callback import Callback
from wpcross.lib.config import _Config
from wpcross.lib.enums import LZMethod, ModeSign, Scenario, TransferArgument
from wpcross.lib.errors import ConfigurationError, RegimeError
from wpcross.lib.utils import ensure_directory, write_csv, write_json
from wpcross.potential import NAMED_POTENTIALS, PhasePoint, named_potential
from wpcross.profiles import gaussian_profile
from wpcross.reference import (
    ObservablesRecorder,
    compare_to_packet,
    evolve,
    mode_masses,
    state_from_packets,
)
from wpcross.transition import (
    TransitionResult,
    TransitionSettings,
    build_initial_packet,
    check_regime,
    error_budget,
    transition,
)

EPS_RANGE = (0.0, 0.5)
# box margin beyond the trajectory excursion, in packet widths
BOX_MARGIN = 12.0


def _enum_value(enum: type, name: str, key: str):
    try:
        return enum[name.upper().replace("-", "_")]
    except KeyError:
        choices = ", ".join(m.name.lower().replace("_", "-") for m in enum)
        raise ConfigurationError(f"Unknown {key} '{name}', expected one of {choices}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Immutable snapshot of the settings one run uses
    """
    scenario: Scenario
    potential_id: str
    dim: int
    alpha0: float
    c: float
    q0: tuple[float, ...]
    p0: tuple[float, ...]
    mode: ModeSign
    eps: tuple[float, ...]
    delta: float | None
    beta: float
    localize: bool
    profile_points: int
    profile_half_width: float
    reference_points: int
    reference_half_width: float | None
    time_step: float
    reference_enabled: bool
    observe_every: int
    output_directory: str
    worker_count: int
    lz_z_values: tuple[float, ...] = field(default_factory=tuple)
    lz_T: float = 200.0
    lz_step: float = 0.01
    lz_method: LZMethod = LZMethod.MAGNUS
    lz_argument: TransferArgument = TransferArgument.PRINTED
    lz_ode_z: tuple[float, ...] = (0.3, 0.8, 1.5)

    def __post_init__(self) -> None:
        if self.potential_id not in NAMED_POTENTIALS:
            raise ConfigurationError(f"Unknown potential id '{self.potential_id}', "
                                     f"expected one of {', '.join(NAMED_POTENTIALS)}")
        if not self.eps:
            raise ConfigurationError("At least one ε is required")
        for eps in self.eps:
            if not EPS_RANGE[0] < eps < EPS_RANGE[1]:
                raise ConfigurationError(f"ε must lie in (0, 0.5), got {eps}")
        if len(self.q0) != self.dim or len(self.p0) != self.dim:
            raise ConfigurationError(f"Initial point must have {self.dim} coordinates, got q0={list(self.q0)}, "
                                     f"p0={list(self.p0)}")
        if self.delta is not None and not self.delta > 0:
            raise ConfigurationError(f"δ must be positive, got {self.delta}")
        if self.worker_count < 1:
            raise ConfigurationError(f"Worker count must be positive, got {self.worker_count}")

    @classmethod
    def from_config(cls, settings: _Config) -> ScenarioConfig:
        delta = settings.schedule_delta
        if isinstance(delta, str):
            if delta != "auto":
                raise ConfigurationError(f"schedule.delta must be 'auto' or a number, got '{delta}'")
            delta = None
        return cls(
            scenario=_enum_value(Scenario, settings.scenario, "scenario"),
            potential_id=settings.potential_id,
            dim=settings.potential_dim,
            alpha0=settings.potential_alpha0,
            c=settings.potential_c,
            q0=tuple(settings.packet_q0),
            p0=tuple(settings.packet_p0),
            mode=_enum_value(ModeSign, settings.packet_mode, "mode"),
            eps=tuple(settings.eps),
            delta=None if delta is None else float(delta),
            beta=settings.schedule_beta,
            localize=settings.schedule_localize,
            profile_points=settings.profile_points,
            profile_half_width=settings.profile_half_width,
            reference_points=settings.reference_points,
            reference_half_width=settings.reference_half_width,
            time_step=settings.time_step,
            reference_enabled=settings.reference_enabled,
            observe_every=settings.reference_observe_every,
            output_directory=settings.output_directory,
            worker_count=settings.worker_count,
            lz_z_values=tuple(settings.lz_z_values),
            lz_T=settings.lz_T,
            lz_step=settings.lz_step,
            lz_method=_enum_value(LZMethod, settings.lz_method, "LZ method"),
            lz_argument=_enum_value(TransferArgument, settings.lz_argument, "transfer argument"),
            lz_ode_z=tuple(settings.lz_ode_z),
        )

    def delta_for(self, eps: float) -> float:
        return self.delta if self.delta is not None else eps ** (5.0 / 14.0)

    @property
    def localization_steps(self) -> int:
        """
        N₀ = ⌈1/(14β)⌉ paired with the localization radius ε^{−β}
        """
        return math.ceil(1.0 / (14.0 * self.beta))

    def settings_for(self) -> TransitionSettings:
        return TransitionSettings(step=self.time_step, delta=self.delta, beta=self.beta,
                                  argument=self.lz_argument, localize=self.localize)

    def potential(self):
        return named_potential(self.potential_id, self.dim, self.alpha0, self.c)

    def as_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if hasattr(value, "name"):
                data[key] = value.value if isinstance(value, Scenario) else value.name.lower()
        return data


@dataclass
class ValidationReport:
    entries: list[dict]
    warnings: list[str]
    ok: bool

    def as_dict(self) -> dict:
        return {"ok": self.ok, "entries": self.entries, "warnings": self.warnings}


def validate(cfg: ScenarioConfig) -> ValidationReport:
    """
    Dry run of the regime checks for every ε, nothing is integrated
    """
    entries, warnings, ok = [], [], True
    alpha = abs(cfg.alpha0) if cfg.potential_id == "shifted-linear" else 0.0
    for eps in cfg.eps:
        delta = cfg.delta_for(eps)
        root = math.sqrt(eps)
        entry = {"eps": eps, "delta": delta, "ratios": {"sqrt_eps_over_delta": root / delta,
                                                       "delta_cubed_over_eps": delta ** 3 / eps,
                                                       "alpha_over_sqrt_eps": alpha / root}}
        entry["schedule"] = {"localization_radius": eps ** -cfg.beta, "localization_steps": cfg.localization_steps}
        try:
            check_regime(eps, delta, alpha)
            entry["status"] = "pass"
        except RegimeError as e:
            entry["status"] = "fail"
            entry["reason"] = str(e)
            ok = False
        if alpha / root > 5.0:
            warnings.append(f"ε={eps:g}: gap α={alpha:g} is not O(√ε) (α/√ε = {alpha / root:.3g})")
        entries.append(entry)
    for warning in warnings:
        logger.warning(warning)
    return ValidationReport(entries, warnings, ok)


def _tag(eps: float) -> str:
    return f"eps_{eps:g}"


def _reference_half_width(cfg: ScenarioConfig, result: TransitionResult, eps: float) -> float:
    if cfg.reference_half_width is not None:
        return cfg.reference_half_width
    points = [np.asarray(cfg.q0), result.event.z_flat.q, result.out_plus.center.q, result.out_minus.center.q]
    excursion = max(float(np.max(np.abs(q))) for q in points)
    return excursion + BOX_MARGIN * math.sqrt(eps)


def run_entry(cfg: ScenarioConfig, eps: float, out: str, with_reference: bool) -> dict:
    """
    One ε of a crossing scenario: the packet pipeline, then optionally the reference run to t♭ + δ
    """
    pot = cfg.potential()
    phi = gaussian_profile(cfg.dim, cfg.profile_points, cfg.profile_half_width)
    z0 = PhasePoint(np.array(cfg.q0), np.array(cfg.p0))
    tag = _tag(eps)
    logger.info(f"Running {cfg.scenario.value} at ε={eps:g}, δ={cfg.delta_for(eps):.4g}")

    result = transition(pot, z0, cfg.mode, phi, eps, cfg.settings_for())
    result.export(out, tag)
    integrate_flow(pot, cfg.mode, False, z0, 0.0, result.event.t_flat, cfg.time_step).to_csv(
        os.path.join(out, f"{tag}_incoming.csv"), pot)

    transferred = result.out_plus if cfg.mode is ModeSign.MINUS else result.out_minus
    entry = {
        "eps": eps,
        "delta": cfg.delta_for(eps),
        "transition": result.summary(),
        "transferred_mass": transferred.mass(),
        "error_budget": {"theoretical": error_budget(eps, cfg.beta)},
    }
    if not with_reference:
        return entry

    packet0 = build_initial_packet(pot, z0, cfg.mode, phi, eps)
    state = state_from_packets(packet0, cfg.reference_points, _reference_half_width(cfg, result, eps), t=0.0)
    recorder = ObservablesRecorder(pot)
    observer: Callback = Callback(every=cfg.observe_every)
    observer.register(recorder)
    observer(state, force=True)
    state = evolve(pot, state, result.out_plus.time, cfg.time_step, observer)
    recorder.to_csv(os.path.join(out, f"{tag}_observables.csv"))
    state.dump(os.path.join(out, f"{tag}_reference.bin"))

    m_minus, m_plus = mode_masses(pot, state)
    reference_transferred = m_plus if cfg.mode is ModeSign.MINUS else m_minus
    mismatch = abs(reference_transferred - entry["transferred_mass"]) / max(entry["transferred_mass"], 1e-300)
    l2 = compare_to_packet(state, [result.out_minus, result.out_plus])
    entry["reference"] = {"t": state.t, "half_width": state.half_width, "n": state.n, "mass": state.mass(),
                          "m_minus": m_minus, "m_plus": m_plus, "transferred_mass": reference_transferred}
    entry["error_budget"].update({"reference_l2": l2, "mass_mismatch": mismatch})
    logger.info(f"ε={eps:g}: transferred mass {entry['transferred_mass']:.6f} (reference "
                f"{reference_transferred:.6f}), L² error {l2:.4e}")
    return entry


def _run_pool(cfg: ScenarioConfig, out: str, with_reference: bool) -> list[dict]:
    with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
        return list(pool.map(lambda eps: run_entry(cfg, eps, out, with_reference), cfg.eps))


def _write_masses(path: str, entries: list[dict]) -> None:
    rows = []
    for entry in entries:
        masses = entry["transition"]["masses"]
        reference = entry.get("reference", {})
        rows.append([entry["eps"], entry["delta"], masses["ingoing"], masses["out_plus"], masses["out_minus"],
                     reference.get("m_plus", float("nan")), reference.get("m_minus", float("nan"))])
    write_csv(path, ["eps", "delta", "ingoing", "out_plus", "out_minus", "reference_plus", "reference_minus"], rows)


def _run_lz_table(cfg: ScenarioConfig, out: str) -> dict:
    write_lz_table(os.path.join(out, "lz_table.csv"), list(cfg.lz_z_values))
    rows = []
    for z2 in cfg.lz_ode_z:
        transfer = lz_transfer_matrix(LZParameters(0.0, z2), cfg.lz_T, cfg.lz_step, method=cfg.lz_method)
        rows.append([z2, float(coeff_a(z2)) ** 2, float(abs(transfer.S[1, 1]) ** 2), transfer.deviation])
    write_csv(os.path.join(out, "lz_ode.csv"), ["z", "a_squared", "ode_transmission", "deviation"], rows)
    z = np.asarray(cfg.lz_z_values)
    defect = float(np.max(np.abs(coeff_a(z) ** 2 + np.abs(coeff_b(z)) ** 2 - 1.0))) if z.size else 0.0
    return {"rows": len(cfg.lz_z_values), "ode": rows, "max_unitarity_defect": defect}


def _run_convergence(cfg: ScenarioConfig, out: str) -> dict:
    ordered = sorted(cfg.eps, reverse=True)
    entries = _run_pool(replace(cfg, eps=tuple(ordered)), out, True)
    errors = [e["error_budget"]["reference_l2"] for e in entries]
    monotone = all(later < earlier for earlier, later in zip(errors, errors[1:]))
    write_csv(os.path.join(out, "convergence.csv"),
              ["eps", "delta", "l2_error", "mass_mismatch", "reference_transferred", "predicted_transferred",
               "error_budget"],
              [[e["eps"], e["delta"], e["error_budget"]["reference_l2"], e["error_budget"]["mass_mismatch"],
                e["reference"]["transferred_mass"], e["transferred_mass"], e["error_budget"]["theoretical"]]
               for e in entries])
    _write_masses(os.path.join(out, "masses.csv"), entries)
    if not monotone:
        logger.warning(f"L² errors are not monotone in ε: {errors}")
    return {"entries": entries, "monotone": monotone}


def run_scenario(cfg: ScenarioConfig, settings: _Config | None = None) -> dict:
    """
    Run the configured scenario and write its artifacts; returns the summary written to summary.json
    """
    out = ensure_directory(cfg.output_directory)
    report = validate(cfg)
    if cfg.scenario is not Scenario.LZ_TABLE and not report.ok:
        failing = next(e for e in report.entries if e["status"] == "fail")
        raise RegimeError(failing["reason"])

    summary: dict = {"scenario": cfg.scenario.value, "config": cfg.as_dict(), "validation": report.as_dict()}
    if cfg.scenario is Scenario.LZ_TABLE:
        summary["lz"] = _run_lz_table(cfg, out)
    elif cfg.scenario is Scenario.CONVERGENCE:
        summary.update(_run_convergence(cfg, out))
    else:
        mode = ModeSign.PLUS if cfg.scenario is Scenario.PLUS_CROSSING else cfg.mode
        run_cfg = replace(cfg, mode=mode)
        entries = _run_pool(run_cfg, out, cfg.reference_enabled)
        _write_masses(os.path.join(out, "masses.csv"), entries)
        summary["entries"] = entries

    write_json(os.path.join(out, "summary.json"), summary)
    if settings is not None:
        settings.save(os.path.join(out, "settings.json"))
    logger.success(f"Scenario {cfg.scenario.value} finished, artifacts in {out}")
    return summary
