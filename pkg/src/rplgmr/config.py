"""Fit, fusion and run configuration, with the two tuned dataset presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields


@dataclass(frozen=True)
class FitConfig:
    k: int = 200
    alpha: float = 0.98
    epsilon: float = 1e-5
    max_iters: int = 50
    t_rho: float = 0.5
    c_dm: float = 2.1
    seed: int = 0
    kmeans_restarts: int = 1
    kmeans_max_iters: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.t_rho <= 1:
            raise ValueError("t_rho must lie in [0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class FusionConfig:
    t_mse: float = 5.0
    t_proj: float = 10.0
    c_dm: float = 2.1

    def __post_init__(self):
        if self.t_mse < 0 or self.t_proj <= 0 or self.c_dm <= 0:
            raise ValueError("fusion thresholds must be positive")


_SHARED = dict(k=200, c_dm=2.1, t_proj=10.0, t_rho=0.5, epsilon=1e-5, max_iters=50)

PRESETS = {
    "abw": dict(_SHARED, alpha=0.98, t_mse=5.0),
    "perceptron": dict(_SHARED, alpha=0.99, t_mse=7.5),
    "custom": dict(_SHARED, alpha=0.98, t_mse=5.0),
}


@dataclass
class RunConfig:
    preset: str = "abw"
    k: int = 200
    alpha: float = 0.98
    epsilon: float = 1e-5
    max_iters: int = 50
    t_rho: float = 0.5
    c_dm: float = 2.1
    t_mse: float = 5.0
    t_proj: float = 10.0
    seed: int = 0
    kmeans_restarts: int = 1
    kmeans_max_iters: int = 100
    threshold: float = 0.8
    inputs: list = field(default_factory=list)
    out_dir: str = "."
    render: bool = False
    verbose: bool = False

    @classmethod
    def resolve(cls, file_values=None, overrides=None) -> "RunConfig":
        """Layer preset defaults < config-file values < explicit overrides.

        The preset itself is taken from the overrides, then the file, then
        ``abw``. ``None`` entries mean "not given" and are skipped.
        """
        file_values = dict(file_values or {})
        overrides = dict(overrides or {})
        preset = overrides.get("preset") or file_values.get("preset") or "abw"
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        known = {f.name for f in fields(cls)}
        values = dict(PRESETS[preset])
        for src in (file_values, overrides):
            for key, val in src.items():
                if key not in known:
                    raise ValueError(f"unknown configuration key {key!r}")
                if val is not None:
                    values[key] = val
        values["preset"] = preset
        return cls(**values)

    def fit_config(self) -> FitConfig:
        return FitConfig(k=self.k, alpha=self.alpha, epsilon=self.epsilon,
                         max_iters=self.max_iters, t_rho=self.t_rho, c_dm=self.c_dm,
                         seed=self.seed, kmeans_restarts=self.kmeans_restarts,
                         kmeans_max_iters=self.kmeans_max_iters)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(t_mse=self.t_mse, t_proj=self.t_proj, c_dm=self.c_dm)

    def to_dict(self) -> dict:
        return asdict(self)
