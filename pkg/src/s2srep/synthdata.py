"""Seeded synthetic ICU cohorts with the raw layout ``preprocess`` reads.

Each patient carries an hourly linear-Gaussian latent state with a slow block
(drives severity and the end-of-stay hazards) and a fast block (short-lived
fluctuation). Channels are noisy linear readouts of the latent state sampled
irregularly at class-dependent rates. Hour ``h`` covers ``(h-1, h]``; an
observation inside it reads the latent value of hour ``h``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .preprocess.records import PatientRecord


@dataclass
class GeneratorConfig:
    n_patients: int = 400
    n_vars: int = 16
    stay_range: tuple[float, float] = (72.0, 240.0)
    class_fractions: tuple[float, float] = (0.4, 0.2)   # periodic, aperiodic; rest lab
    # mean hours between observations, per class
    intervals: dict = field(default_factory=lambda: {"periodic": 0.5, "aperiodic": 3.0,
                                                     "lab": 12.0})
    slow_dim: int = 2
    fast_dim: int = 4
    slow_ar: float = 0.98
    fast_ar: float = 0.6
    slow_loading: float = 0.6
    fast_loading: float = 1.0
    death_coef: float = 1.5
    discharge_coef: float = 1.5
    death_rate: float = 0.0012      # mean hourly hazard once the minimum stay has passed
    discharge_rate: float = 0.03
    missingness_rate: float = 0.1
    absent_fraction: float = 0.05   # chance a lab variable is never measured for a patient
    noise_scale: float = 0.3
    multi_stay_fraction: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.stay_range
        if self.n_patients < 1:
            raise ValueError("n_patients must be at least 1")
        if not 1 <= self.n_vars <= 94:
            raise ValueError("n_vars must be in [1, 94]")
        if not 72.0 <= lo <= hi <= 240.0:
            raise ValueError(f"stay_range {self.stay_range} must lie within [72, 240]")
        if any(v <= 0 for v in self.intervals.values()) or set(self.intervals) != {
                "periodic", "aperiodic", "lab"}:
            raise ValueError("intervals must give a positive value for each variable class")
        if self.slow_dim < 1 or self.fast_dim < 0:
            raise ValueError("slow_dim must be >= 1 and fast_dim >= 0")
        if not (0 <= self.slow_ar < 1 and 0 <= self.fast_ar < 1):
            raise ValueError("AR coefficients must lie in [0, 1)")
        if self.death_rate <= 0 or self.discharge_rate <= 0:
            raise ValueError("hazard base rates must be positive")
        for name in ("missingness_rate", "absent_fraction", "multi_stay_fraction"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stay_range"] = list(self.stay_range)
        d["class_fractions"] = list(self.class_fractions)
        return d


def variable_classes(cfg: GeneratorConfig) -> list[str]:
    n_per = int(round(cfg.class_fractions[0] * cfg.n_vars))
    n_aper = int(round(cfg.class_fractions[1] * cfg.n_vars))
    n_aper = min(n_aper, cfg.n_vars - n_per)
    return ["periodic"] * n_per + ["aperiodic"] * n_aper + ["lab"] * (cfg.n_vars - n_per - n_aper)


def variable_table(cfg: GeneratorConfig) -> dict[str, str]:
    return {f"v{j:02d}_{cls}": cls for j, cls in enumerate(variable_classes(cfg))}


@dataclass
class _Readout:
    offset: np.ndarray
    scale: np.ndarray
    loadings: np.ndarray   # (n_vars, slow_dim + fast_dim)


def _readout(cfg: GeneratorConfig) -> _Readout:
    rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    d = cfg.n_vars
    slow = rng.normal(size=(d, cfg.slow_dim)) * cfg.slow_loading / np.sqrt(cfg.slow_dim)
    fast = rng.normal(size=(d, cfg.fast_dim)) * cfg.fast_loading / np.sqrt(max(cfg.fast_dim, 1))
    return _Readout(offset=rng.uniform(20.0, 120.0, d), scale=rng.uniform(1.0, 10.0, d),
                    loadings=np.concatenate([slow, fast], axis=1))


def _ar_path(rng, n_steps: int, dim: int, coef: float) -> np.ndarray:
    z = np.empty((n_steps, dim))
    z[0] = rng.normal(size=dim)
    innov = np.sqrt(1.0 - coef * coef)
    for h in range(1, n_steps):
        z[h] = coef * z[h - 1] + innov * rng.normal(size=dim)
    return z


def _end_of_stay(rng, severity: np.ndarray, cfg: GeneratorConfig) -> tuple[int, str]:
    lo, hi = int(np.ceil(cfg.stay_range[0])), int(np.floor(cfg.stay_range[1]))
    kd, kc = cfg.death_coef, cfg.discharge_coef
    for h in range(lo, hi + 1):
        s = severity[h]
        lam_d = cfg.death_rate * np.exp(kd * s - 0.5 * kd * kd)
        lam_c = cfg.discharge_rate * np.exp(-kc * s - 0.5 * kc * kc)
        u_end, u_kind = rng.random(), rng.random()
        if h == hi or u_end < 1.0 - np.exp(-(lam_d + lam_c)):
            return h, "died" if u_kind < lam_d / (lam_d + lam_c) else "discharged_stable"
    raise AssertionError("unreachable")


def _patient(index: int, cfg: GeneratorConfig, classes, names, readout: _Readout):
    rng = np.random.default_rng([cfg.seed, index])
    n_hours = int(np.floor(cfg.stay_range[1])) + 1
    latent = np.concatenate([_ar_path(rng, n_hours, cfg.slow_dim, cfg.slow_ar),
                             _ar_path(rng, n_hours, cfg.fast_dim, cfg.fast_ar)], axis=1)
    stay, outcome = _end_of_stay(rng, latent[:, 0], cfg)
    stay_count = 2 if rng.random() < cfg.multi_stay_fraction else 1
    obs = {}
    for j, (cls, name) in enumerate(zip(classes, names)):
        if cls == "lab" and rng.random() < cfg.absent_fraction:
            continue
        n = rng.poisson(stay / cfg.intervals[cls])
        times = np.sort(rng.uniform(0.0, stay, n))
        times = times[rng.random(n) >= cfg.missingness_rate]
        if times.size == 0:
            continue
        hours = np.clip(np.ceil(times), 1, stay).astype(int)
        clean = latent[hours] @ readout.loadings[j]
        noise = cfg.noise_scale * rng.normal(size=times.size)
        obs[name] = (times, readout.offset[j] + readout.scale[j] * (clean + noise))
    record = PatientRecord(f"P{index:05d}", float(stay), outcome, stay_count, obs)
    return record, latent[: stay + 1]


def generate(cfg: GeneratorConfig):
    """Records, hourly latent trajectories (row h = hour h) and the variable table."""
    cfg.validate()
    table = variable_table(cfg)
    names, classes = list(table), list(table.values())
    readout = _readout(cfg)
    records, latents = [], {}
    for i in range(cfg.n_patients):
        rec, lat = _patient(i, cfg, classes, names, readout)
        records.append(rec)
        latents[rec.patient_id] = lat
    return records, latents, table


def readout_matrix(cfg: GeneratorConfig):
    """``(offset, scale, loadings)`` mapping latent state to noiseless channel values."""
    r = _readout(cfg)
    return r.offset, r.scale, r.loadings
