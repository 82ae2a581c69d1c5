"""Scenario configuration: defaults, INI files, and validation.

Every tunable named in the experiment write-ups has a key here with its
published value as the default; desk-scale variants override only what
they must (resolution, network width, epochs).  Configs are plain INI
files so runs stay human-diffable.
"""

import configparser
import dataclasses

from ..networks import NetworkSpec
from ..refinement import PRDPConfig
from ..training import LRSchedule

SCENARIOS = (
    "poisson_inverse_1p",
    "poisson_inverse_3p",
    "heat1d",
    "heat2d",
    "heat3d",
    "burgers1d",
    "navier_stokes_hybrid",
)

_SOLVER_COMPAT = {
    "poisson_inverse_1p": ("jacobi", "steepest_descent"),
    "poisson_inverse_3p": ("jacobi", "steepest_descent"),
    "heat1d": ("jacobi", "steepest_descent"),
    "heat2d": ("jacobi", "steepest_descent"),
    "heat3d": ("jacobi", "steepest_descent"),
    "burgers1d": ("gmres",),
    "navier_stokes_hybrid": ("gmres",),
}


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    mode: str = "prdp"
    seeds: tuple = (0,)
    # grid and physics
    n: int = 30
    fine_n: int = 0
    nu: float = 1e-3
    dt: float = 1.0
    # inner solver
    solver: str = "jacobi"
    gmres_restart: int = 8
    diff_mode: str = "implicit"
    tolerance: float = 1e-5
    # trainable component and optimization
    network: NetworkSpec = None
    optimizer: str = "adam"
    schedule: LRSchedule = None
    epochs: int = 100
    batch_size: int = 25
    train_samples: int = 200
    val_samples: int = 5
    data_seed: int = 1000
    n_modes: int = 5
    val_step: int = 2
    dataset_path: str = ""
    # inverse-problem specifics
    theta_ref: tuple = ()
    theta_init: tuple = ()
    outer_steps: int = 0
    lr: float = 0.0
    target_suboptimality: float = 1e-5
    # refinement controller
    prdp: PRDPConfig = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.solver not in _SOLVER_COMPAT[self.scenario]:
            raise ValueError(f"{self.scenario} does not support solver {self.solver!r}")
        if self.diff_mode not in ("implicit", "unrolled"):
            raise ValueError(f"unknown diff mode {self.diff_mode!r}")
        mode_kind(self.mode)
        if not self.seeds:
            raise ValueError("at least one seed is required")


def mode_kind(mode):
    """Parse the run mode into (kind, K-or-None)."""
    if mode == "prdp" or mode == "converged":
        return mode, None
    if mode.startswith("fixed:"):
        k = int(mode.split(":", 1)[1])
        if k < 1:
            raise ValueError("fixed mode needs K >= 1")
        return "fixed", k
    raise ValueError(f"unknown mode {mode!r}; expected prdp, converged, or fixed:<K>")


def _prdp(K_cap, **kw):
    return PRDPConfig(K_cap=K_cap, **kw)


def scenario_defaults(scenario):
    """Published-parameter ScenarioConfig for one scenario."""
    if scenario == "poisson_inverse_1p":
        return ScenarioConfig(
            scenario=scenario,
            n=30,
            solver="jacobi",
            diff_mode="unrolled",
            theta_ref=(2.0,),
            theta_init=(5.0,),
            lr=275.0,
            outer_steps=200,
            prdp=_prdp(559, tau_step=0.92, tau_stop=0.97, grace_delta=2, ema_window=6, K0=24, delta_K=90),
        )
    if scenario == "poisson_inverse_3p":
        return ScenarioConfig(
            scenario=scenario,
            n=30,
            solver="jacobi",
            diff_mode="unrolled",
            theta_ref=(0.62, 1.86, 5.1),
            theta_init=(3.0, 3.0, 3.0),
            lr=3500.0,
            outer_steps=750,
            val_step=5,
            prdp=_prdp(452, tau_step=0.95, tau_stop=0.95, grace_delta=2, ema_window=6, K0=15, delta_K=20),
        )
    if scenario == "heat1d":
        return ScenarioConfig(
            scenario=scenario,
            n=30,
            nu=1e-3,
            dt=1.0,
            solver="jacobi",
            diff_mode="implicit",
            network=NetworkSpec(kind="mlp", input_size=30, output_size=30, hidden_width=64, hidden_layers=3),
            schedule=LRSchedule(kind="exponential", base_lr=1e-3, decay_rate=0.94, transition_steps=100),
            epochs=70,
            data_seed=1000,
            prdp=_prdp(26, tau_step=0.98, tau_stop=0.9, grace_delta=3, ema_window=8, K0=5),
        )
    if scenario == "heat2d":
        return ScenarioConfig(
            scenario=scenario,
            n=30,
            nu=1e-3,
            dt=1.0,
            solver="jacobi",
            diff_mode="unrolled",
            network=NetworkSpec(kind="mlp", input_size=900, output_size=900, hidden_width=256, hidden_layers=3),
            schedule=LRSchedule(kind="exponential", base_lr=1e-3, decay_rate=0.9, transition_steps=100),
            epochs=100,
            data_seed=2000,
            prdp=_prdp(45, tau_step=0.9, tau_stop=0.9, grace_delta=3, ema_window=6),
        )
    if scenario == "heat3d":
        return ScenarioConfig(
            scenario=scenario,
            n=8,
            nu=1e-3,
            dt=1.0,
            solver="jacobi",
            diff_mode="unrolled",
            network=NetworkSpec(kind="conv_resnet", spatial_dim=3, blocks=2, hidden_channels=8, padding="zero"),
            schedule=LRSchedule(kind="exponential", base_lr=1e-3, decay_rate=0.92, transition_steps=100),
            epochs=50,
            data_seed=3000,
            prdp=_prdp(10, tau_step=0.97, tau_stop=0.9, grace_delta=3, ema_window=6),
        )
    if scenario == "burgers1d":
        return ScenarioConfig(
            scenario=scenario,
            n=256,
            nu=1e-3,
            dt=0.01,
            solver="gmres",
            gmres_restart=2,
            diff_mode="implicit",
            network=NetworkSpec(kind="conv_resnet", spatial_dim=1, blocks=6, hidden_channels=32, padding="circular"),
            schedule=LRSchedule(kind="exponential", base_lr=1e-3, decay_rate=0.7, transition_steps=100),
            epochs=100,
            n_modes=20,
            val_step=5,
            data_seed=4000,
            prdp=_prdp(22, tau_step=0.9, tau_stop=0.9, grace_delta=3, ema_window=15, K0=4),
        )
    if scenario == "navier_stokes_hybrid":
        return ScenarioConfig(
            scenario=scenario,
            n=16,
            fine_n=32,
            nu=1e-4,
            dt=0.1,
            solver="gmres",
            gmres_restart=8,
            diff_mode="implicit",
            network=NetworkSpec(
                kind="conv_resnet",
                spatial_dim=2,
                blocks=3,
                hidden_channels=64,
                padding="circular",
                in_channels=3,
                out_channels=3,
            ),
            schedule=LRSchedule(kind="cosine", base_lr=1e-3, decay_steps=800),
            epochs=100,
            val_step=5,
            data_seed=5000,
            prdp=_prdp(60, tau_step=0.98, tau_stop=0.9, grace_delta=3, ema_window=6),
        )
    raise ValueError(f"unknown scenario {scenario!r}")


# ---------------------------------------------------------------------------
# INI round trip


def _network_section(spec):
    if spec is None:
        return {}
    fields = {"kind": spec.kind}
    if spec.kind == "mlp":
        fields.update(
            input_size=spec.input_size,
            output_size=spec.output_size,
            hidden_width=spec.hidden_width,
            hidden_layers=spec.hidden_layers,
        )
    else:
        fields.update(
            spatial_dim=spec.spatial_dim,
            blocks=spec.blocks,
            hidden_channels=spec.hidden_channels,
            kernel_size=spec.kernel_size,
            padding=spec.padding,
            in_channels=spec.in_channels,
            out_channels=spec.out_channels,
        )
    return fields


def save_config(path, cfg):
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        "name": cfg.scenario,
        "mode": cfg.mode,
        "seeds": ",".join(str(s) for s in cfg.seeds),
    }
    parser["grid"] = {"n": cfg.n, "fine_n": cfg.fine_n}
    parser["physics"] = {"nu": cfg.nu, "dt": cfg.dt}
    parser["solver"] = {
        "kind": cfg.solver,
        "gmres_restart": cfg.gmres_restart,
        "diff_mode": cfg.diff_mode,
        "tolerance": cfg.tolerance,
    }
    if cfg.network is not None:
        parser["network"] = _network_section(cfg.network)
    training = {
        "optimizer": cfg.optimizer,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "train_samples": cfg.train_samples,
        "val_samples": cfg.val_samples,
        "data_seed": cfg.data_seed,
        "n_modes": cfg.n_modes,
        "val_step": cfg.val_step,
        "dataset_path": cfg.dataset_path,
    }
    if cfg.schedule is not None:
        training.update(
            schedule=cfg.schedule.kind,
            base_lr=cfg.schedule.base_lr,
            decay_rate=cfg.schedule.decay_rate,
            transition_steps=cfg.schedule.transition_steps,
            decay_steps=cfg.schedule.decay_steps,
        )
    parser["training"] = training
    if cfg.theta_ref:
        parser["inverse"] = {
            "theta_ref": ",".join(str(v) for v in cfg.theta_ref),
            "theta_init": ",".join(str(v) for v in cfg.theta_init),
            "lr": cfg.lr,
            "outer_steps": cfg.outer_steps,
            "target_suboptimality": cfg.target_suboptimality,
        }
    parser["prdp"] = {
        "tau_step": cfg.prdp.tau_step,
        "tau_stop": cfg.prdp.tau_stop,
        "grace_delta": cfg.prdp.grace_delta,
        "ema_window": cfg.prdp.ema_window,
        "K0": cfg.prdp.K0,
        "delta_K": cfg.prdp.delta_K,
        "K_cap": cfg.prdp.K_cap,
    }
    parser = {k: {kk: str(vv) for kk, vv in v.items()} for k, v in parser.items() if k != "DEFAULT"}
    writer = configparser.ConfigParser()
    writer.read_dict(parser)
    with open(path, "w") as fh:
        writer.write(fh)


def load_config(path):
    """Parse an INI config; unknown scenario or malformed values raise."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file {path} not found or unreadable")
    try:
        name = parser["scenario"]["name"]
    except KeyError as exc:
        raise ValueError(f"config {path} lacks a [scenario] name") from exc
    cfg = scenario_defaults(name)
    updates = {}
    sc = parser["scenario"]
    if "mode" in sc:
        updates["mode"] = sc["mode"]
    if "seeds" in sc:
        updates["seeds"] = tuple(int(s) for s in sc["seeds"].split(",") if s.strip())
    if parser.has_section("grid"):
        g = parser["grid"]
        updates["n"] = g.getint("n", cfg.n)
        updates["fine_n"] = g.getint("fine_n", cfg.fine_n)
    if parser.has_section("physics"):
        p = parser["physics"]
        updates["nu"] = p.getfloat("nu", cfg.nu)
        updates["dt"] = p.getfloat("dt", cfg.dt)
    if parser.has_section("solver"):
        s = parser["solver"]
        updates["solver"] = s.get("kind", cfg.solver)
        updates["gmres_restart"] = s.getint("gmres_restart", cfg.gmres_restart)
        updates["diff_mode"] = s.get("diff_mode", cfg.diff_mode)
        updates["tolerance"] = s.getfloat("tolerance", cfg.tolerance)
    if parser.has_section("network"):
        nsec = parser["network"]
        kind = nsec.get("kind", cfg.network.kind if cfg.network else "mlp")
        if kind == "mlp":
            updates["network"] = NetworkSpec(
                kind="mlp",
                input_size=nsec.getint("input_size"),
                output_size=nsec.getint("output_size"),
                hidden_width=nsec.getint("hidden_width"),
                hidden_layers=nsec.getint("hidden_layers"),
            )
        else:
            updates["network"] = NetworkSpec(
                kind="conv_resnet",
                spatial_dim=nsec.getint("spatial_dim"),
                blocks=nsec.getint("blocks"),
                hidden_channels=nsec.getint("hidden_channels"),
                kernel_size=nsec.getint("kernel_size", 3),
                padding=nsec.get("padding", "circular"),
                in_channels=nsec.getint("in_channels", 1),
                out_channels=nsec.getint("out_channels", 1),
            )
    if parser.has_section("training"):
        t = parser["training"]
        updates["optimizer"] = t.get("optimizer", cfg.optimizer)
        updates["epochs"] = t.getint("epochs", cfg.epochs)
        updates["batch_size"] = t.getint("batch_size", cfg.batch_size)
        updates["train_samples"] = t.getint("train_samples", cfg.train_samples)
        updates["val_samples"] = t.getint("val_samples", cfg.val_samples)
        updates["data_seed"] = t.getint("data_seed", cfg.data_seed)
        updates["n_modes"] = t.getint("n_modes", cfg.n_modes)
        updates["val_step"] = t.getint("val_step", cfg.val_step)
        updates["dataset_path"] = t.get("dataset_path", cfg.dataset_path)
        if "schedule" in t and cfg.schedule is not None:
            updates["schedule"] = LRSchedule(
                kind=t.get("schedule"),
                base_lr=t.getfloat("base_lr", cfg.schedule.base_lr),
                decay_rate=t.getfloat("decay_rate", cfg.schedule.decay_rate),
                transition_steps=t.getint("transition_steps", cfg.schedule.transition_steps),
                decay_steps=t.getint("decay_steps", cfg.schedule.decay_steps),
            )
    if parser.has_section("inverse"):
        inv = parser["inverse"]
        if "theta_ref" in inv:
            updates["theta_ref"] = tuple(float(v) for v in inv["theta_ref"].split(","))
        if "theta_init" in inv:
            updates["theta_init"] = tuple(float(v) for v in inv["theta_init"].split(","))
        updates["lr"] = inv.getfloat("lr", cfg.lr)
        updates["outer_steps"] = inv.getint("outer_steps", cfg.outer_steps)
        updates["target_suboptimality"] = inv.getfloat("target_suboptimality", cfg.target_suboptimality)
    if parser.has_section("prdp"):
        pr = parser["prdp"]
        updates["prdp"] = PRDPConfig(
            K_cap=pr.getint("K_cap", cfg.prdp.K_cap),
            tau_step=pr.getfloat("tau_step", cfg.prdp.tau_step),
            tau_stop=pr.getfloat("tau_stop", cfg.prdp.tau_stop),
            grace_delta=pr.getint("grace_delta", cfg.prdp.grace_delta),
            ema_window=pr.getint("ema_window", cfg.prdp.ema_window),
            K0=pr.getint("K0", cfg.prdp.K0),
            delta_K=pr.getint("delta_K", cfg.prdp.delta_K),
        )
    return dataclasses.replace(cfg, **updates)
