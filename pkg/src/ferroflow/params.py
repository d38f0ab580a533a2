"""Model and scheme parameters."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class ModelParams:
    """Positive constants of the Shliomis model (all 1 in the test cases)."""

    eta: float = 1.0
    mu0: float = 1.0
    sigma: float = 1.0
    tau: float = 1.0
    chi0: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"parameter {f.name} must be positive")

    def with_overrides(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class SchemeParams:
    """Model constants plus time grid and quasi-Newton sweep count."""

    model: ModelParams
    dt: float
    T: float
    M: int = 2
    # optional early exit of the sweeps on the velocity/magnetization update size
    sweep_tol: float | None = None

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-12:
            raise ValueError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")

    @property
    def num_steps(self) -> int:
        return round(self.T / self.dt)

    def __getattr__(self, name):
        # expose eta, mu0, ... directly
        if name in ("eta", "mu0", "sigma", "tau", "chi0", "beta"):
            return getattr(self.model, name)
        raise AttributeError(name)
