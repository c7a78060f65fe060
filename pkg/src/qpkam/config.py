"""Run configuration: strict schema, JSON round-trip, deterministic hashing.

Unknown keys are rejected (silent parameter typos are fatal in KAM
experiments); every block carries explicit defaults tied to the frequency
dimension.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .fourier import TorusFunction, default_s0
from .straightening import golden_omega

SCHEMA_VERSION = 1

__all__ = ["RunConfig", "SCHEMA_VERSION"]


def _take(d, field_path, key, default, required=False):
    if key in d:
        return d.pop(key)
    if required:
        raise ConfigError(f"{field_path}.{key}", "missing required key")
    return default


def _reject_unknown(d, field_path):
    if d:
        raise ConfigError(f"{field_path}.{next(iter(d))}", "unknown key")


@dataclass
class FrequencyBlock:
    nu: int = 2
    L: float = 1.0
    gamma: float = 0.1
    tau: float = None
    omega: list = None          # explicit vector, or None -> preset
    preset: str = "golden"      # golden | explicit | grid
    grid_points: int = 0        # for omega scans

    def __post_init__(self):
        if self.tau is None:
            self.tau = 2 * self.nu + 6
        if self.tau < 2 * self.nu + 6:
            raise ConfigError("frequency.tau",
                              f"tau = {self.tau} < 2 nu + 6")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("frequency.gamma", "gamma outside (0, 1)")

    def omega_vector(self):
        if self.omega is not None:
            om = np.asarray(self.omega, dtype=float)
            if om.shape != (self.nu,):
                raise ConfigError("frequency.omega", "wrong dimension")
            return om
        return golden_omega(self.nu, self.L)

    def omega_samples(self):
        """For grid scans: a deterministic grid in [L, 2L]^nu."""
        if self.preset != "grid" or self.grid_points < 1:
            return [self.omega_vector()]
        pts = np.linspace(self.L * 1.05, 2 * self.L * 0.95, self.grid_points)
        import itertools

        return [np.asarray(c) for c in itertools.product(pts, repeat=self.nu)]


@dataclass
class ProblemBlock:
    eps: float = 1e-3
    a_modes: list = field(default_factory=list)  # (ell, j, amp, phase)
    q_terms: list = field(default_factory=list)  # multiplier terms

    def a_function(self, nu, l_max, j_max):
        modes = [(tuple(m[0]) if hasattr(m[0], "__len__") else (m[0],),
                  m[1], self.eps * m[2], m[3]) for m in self.a_modes]
        return TorusFunction.from_modes(nu, l_max, j_max, modes)

    def q_operator(self, nu, l_max, j_max):
        """Hamiltonian order -1 perturbation from multiplier terms.

        Each term {"kind": "j_tail", "amp": c} contributes the Fourier
        multiplier c * eps * i xi/(1+xi^2) (checked Hamiltonian and real).
        """
        if not self.q_terms:
            return None
        from .operators import ToeplitzOperator, structure_check

        Q = ToeplitzOperator.zeros(nu, l_max, j_max)
        for term in self.q_terms:
            kind = term.get("kind", "j_tail")
            amp = self.eps * term.get("amp", 1.0)
            if kind == "j_tail":
                Q = Q + ToeplitzOperator.diag_multiplier(
                    nu, l_max, j_max,
                    lambda j: 1j * amp * j / (1.0 + j.astype(float) ** 2))
            else:
                raise ConfigError("problem.q_terms.kind", f"unknown '{kind}'")
        rep = structure_check(Q)
        if not (rep["is_real"] and rep["is_hamiltonian"]):
            raise ConfigError("problem.q_terms", "Q must be real Hamiltonian")
        return Q


@dataclass
class TruncationBlock:
    j_max: int = 32
    l_max: int = 12
    xi_max: int = 40
    rho: int = 4
    s_list: list = field(default_factory=lambda: [0.0])
    s0: float = None


@dataclass
class KamBlock:
    N0: int = 4
    k_max: int = 8
    floor: float = 1e-12
    series_tol: float = 1e-14
    n_flow_steps: int = 16
    b0: float = None
    a_exp: float = None
    tau1: float = None


@dataclass
class EvolutionBlock:
    T: float = 10.0
    dt: float = 1e-3
    u0_modes: list = field(default_factory=lambda: [[1, 1.0, 0.0]])
    record_every: int = 50

    def u0_vector(self, j_max):
        u = np.zeros(2 * j_max + 1, dtype=complex)
        for j, amp, phase in self.u0_modes:
            c = 0.5 * amp * np.exp(1j * phase)
            u[int(j) + j_max] += c
            u[-int(j) + j_max] += np.conj(c)
        return u


@dataclass
class MeasureBlock:
    gammas: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    ell_cut: int = 6
    j_cut: int = 48
    n_slices: int = 64
    c_delpiero: float = 1.0
    tau1: float = None          # defaults to nu + 2


@dataclass
class RunConfig:
    frequency: FrequencyBlock = field(default_factory=FrequencyBlock)
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    truncation: TruncationBlock = field(default_factory=TruncationBlock)
    kam: KamBlock = field(default_factory=KamBlock)
    evolution: EvolutionBlock = field(default_factory=EvolutionBlock)
    measure: MeasureBlock = field(default_factory=MeasureBlock)
    seed: int = 0
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.truncation.s0 is None:
            self.truncation.s0 = float(default_s0(self.frequency.nu))
        for tol_name, value in (("kam.floor", self.kam.floor),
                                ("kam.series_tol", self.kam.series_tol)):
            if value < 0:
                raise ConfigError(tol_name, "tolerances must be >= 0")

    # -- serialization -----------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = _take(d, "config", "schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version",
                              f"expected {SCHEMA_VERSION}, got {version}")
        blocks = {}
        for name, klass in (("frequency", FrequencyBlock),
                            ("problem", ProblemBlock),
                            ("truncation", TruncationBlock),
                            ("kam", KamBlock),
                            ("evolution", EvolutionBlock),
                            ("measure", MeasureBlock)):
            sub = dict(_take(d, "config", name, {}))
            kwargs = {}
            for f in klass.__dataclass_fields__:
                if f in sub:
                    kwargs[f] = sub.pop(f)
            _reject_unknown(sub, name)
            try:
                blocks[name] = klass(**kwargs)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(name, str(exc))
        seed = _take(d, "config", "seed", 0)
        threads = _take(d, "config", "threads", 1)
        _reject_unknown(d, "config")
        return cls(seed=seed, threads=threads, **blocks)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        d = asdict(self)
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
