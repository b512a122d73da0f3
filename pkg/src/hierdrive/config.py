"""Training/model configuration with the desk-scale defaults."""

from dataclasses import dataclass, field, fields


@dataclass
class TrainConfig:
    # optimization
    epochs: int = 60
    batch_size: int = 8
    lr0: float = 4e-4
    lr_min: float = 4e-6
    weight_decay: float = 0.01
    seed: int = 0
    # model shapes
    k_anchors: int = 8
    m_modes: int = 4
    dim: int = 64
    heads: int = 4
    t_future: int = 6
    dt: float = 0.5
    n_map_queries: int = 6
    n_agent_queries: int = 8
    map_points: int = 10
    # BEV interaction rounds; detection/map need a refinement round to
    # sharpen attention enough for sub-cell localization
    n_agent_blocks: int = 2
    n_map_blocks: int = 2
    # BEV grid
    grid_h: int = 40
    grid_w: int = 20
    extent_long: float = 60.0
    extent_lat: float = 30.0
    # anchors
    kmeans_momentum: float = 0.99
    # constraint margins
    col_margin_long: float = 3.0
    col_margin_lat: float = 1.0
    boundary_margin: float = 1.0
    direction_margin_deg: float = 45.0
    # loss weights
    w_map: float = 2.0
    w_det: float = 2.0
    w_mot: float = 0.2
    w_intent: float = 1.0
    w_wta: float = 1.0
    w_constr: float = 1.0
    w_kmeans: float = 1.0

    def to_kv_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv_text(cls, text):
        """Parse key=value lines (blank lines and # comments ignored)."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown field {key!r}")
            caster = int if known[key] == "int" or known[key] is int else float
            kwargs[key] = caster(value.strip())
        return cls(**kwargs)

    def replace(self, **overrides):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(overrides)
        return TrainConfig(**data)


# fields of TrainConfig that describe the model rather than the optimizer;
# stored in checkpoints so a model can be rebuilt without the original config
MODEL_FIELDS = (
    "k_anchors", "m_modes", "dim", "heads", "t_future", "dt",
    "n_map_queries", "n_agent_queries", "map_points",
    "n_agent_blocks", "n_map_blocks",
    "grid_h", "grid_w", "extent_long", "extent_lat",
)
