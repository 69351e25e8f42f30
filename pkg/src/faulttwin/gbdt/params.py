from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class GbdtParams:
    """Booster hyperparameters; bounds are checked at construction.

    ``max_depth`` and ``early_stopping_rounds`` use ``None`` for unlimited/off.
    """

    num_boost_rounds: int = 100
    learning_rate: float = 0.1
    num_leaves: int = 31
    min_data_in_leaf: int = 20
    feature_fraction: float = 1.0
    bagging_fraction: float = 1.0
    lambda_l2: float = 0.0
    max_depth: int | None = None
    focal_gamma: float = 2.0
    n_histogram_bins: int = 255
    early_stopping_rounds: int | None = None
    min_sum_hessian_in_leaf: float = 1e-3
    max_delta_step: float | None = 1.0

    def __post_init__(self):
        def need(ok, msg):
            if not ok:
                raise ValueError(f"GbdtParams: {msg}")

        need(int(self.num_boost_rounds) == self.num_boost_rounds and self.num_boost_rounds >= 1,
             "num_boost_rounds must be an integer >= 1")
        need(0 < self.learning_rate <= 1, "learning_rate must lie in (0, 1]")
        need(int(self.num_leaves) == self.num_leaves and self.num_leaves >= 2,
             "num_leaves must be an integer >= 2")
        need(int(self.min_data_in_leaf) == self.min_data_in_leaf and self.min_data_in_leaf >= 1,
             "min_data_in_leaf must be an integer >= 1")
        need(0 < self.feature_fraction <= 1, "feature_fraction must lie in (0, 1]")
        need(0 < self.bagging_fraction <= 1, "bagging_fraction must lie in (0, 1]")
        need(self.lambda_l2 >= 0, "lambda_l2 must be >= 0")
        need(self.max_depth is None or (int(self.max_depth) == self.max_depth and self.max_depth >= 1),
             "max_depth must be None or an integer >= 1")
        need(self.focal_gamma >= 0, "focal_gamma must be >= 0")
        need(int(self.n_histogram_bins) == self.n_histogram_bins and 2 <= self.n_histogram_bins <= 65535,
             "n_histogram_bins must be an integer in [2, 65535]")
        need(self.early_stopping_rounds is None
             or (int(self.early_stopping_rounds) == self.early_stopping_rounds
                 and self.early_stopping_rounds >= 1),
             "early_stopping_rounds must be None or an integer >= 1")
        need(self.min_sum_hessian_in_leaf >= 0, "min_sum_hessian_in_leaf must be >= 0")
        need(self.max_delta_step is None or self.max_delta_step > 0,
             "max_delta_step must be None (off) or > 0")
        for name in ("num_boost_rounds", "num_leaves", "min_data_in_leaf", "n_histogram_bins"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.max_delta_step is not None:
            object.__setattr__(self, "max_delta_step", float(self.max_delta_step))
        for name in ("max_depth", "early_stopping_rounds"):
            v = getattr(self, name)
            object.__setattr__(self, name, None if v is None else int(v))
        for name in ("learning_rate", "feature_fraction", "bagging_fraction", "lambda_l2",
                     "focal_gamma", "min_sum_hessian_in_leaf"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"GbdtParams: unknown parameters {sorted(unknown)}")
        return cls(**d)

    def updated(self, **changes) -> "GbdtParams":
        return replace(self, **changes)
