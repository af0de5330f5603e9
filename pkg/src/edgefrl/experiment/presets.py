"""Ready-made experiment scenarios.

Every preset returns a list of configs (most hold a single one). Default
seeds are listed in ``PRESET_SEEDS``; ``seed=`` overrides them.
"""

from __future__ import annotations

import copy

from .config import ExperimentConfig, parse_config

DEVICES = [
    # Jetson-AGX-like: fast GPU, 4 usable cores
    {"name": "agx", "base_latency": 0.010, "per_item_latency": 0.004, "preproc_cost": 0.02,
     "postproc_cost": 0.01, "cores": 4, "max_threads": 8, "max_batch": 16, "queue_capacity": 64,
     "bandwidth": 20.0, "memory_budget_kb": 1024.0},
    # Jetson-NX-like: roughly half the speed, slower link
    {"name": "nx", "base_latency": 0.018, "per_item_latency": 0.007, "preproc_cost": 0.035,
     "postproc_cost": 0.015, "cores": 2, "max_threads": 8, "max_batch": 16, "queue_capacity": 64,
     "bandwidth": 8.0, "memory_budget_kb": 512.0, "link_delay": 0.005},
    # edge server GPU
    {"name": "server", "base_latency": 0.006, "per_item_latency": 0.002, "preproc_cost": 0.01,
     "postproc_cost": 0.005, "cores": 8, "max_threads": 16, "max_batch": 32, "queue_capacity": 128,
     "bandwidth": 40.0, "memory_budget_kb": 4096.0, "link_delay": 0.002},
]

SPACE = {"res": [1, 2, 4], "bs": [1, 2, 4, 8, 16], "mt": [1, 2, 4]}

PRESET_SEEDS = {
    "main": 0,
    "strict-slo": 0,
    "warm-cold": 0,
    "crl-switch": 0,
    "frl-scale": 0,
    "single-head": 0,
}


def _stage(device: str, fanout: int = 1) -> dict:
    return {"device": device, "fanout": fanout, **copy.deepcopy(SPACE)}


def _trace(name: str, *segments: tuple[float, float, float]) -> dict:
    return {"name": name, "segments": [{"duration": d, "rate": r, "burstiness": b} for d, r, b in segments]}


def _single(name: str, trace: str, device: str = "agx", **extra) -> dict:
    return {"name": name, "trace": trace, "stages": [_stage(device)], **extra}


def _main(seed: int, slo: float = 0.25, name: str = "main") -> dict:
    # three application domains, detector followed by a per-object classifier
    traces = [
        _trace("traffic", (300, 60, 1.5), (300, 110, 2.0), (300, 45, 1.5)),
        _trace("building", (300, 25, 1.2), (300, 50, 1.5), (300, 20, 1.2)),
        _trace("retail", (300, 40, 1.5), (300, 80, 2.0), (300, 30, 1.5)),
    ]
    pipelines = [
        {"name": "traffic", "trace": "traffic", "slo": slo, "stages": [_stage("agx"), _stage("server", 2)]},
        {"name": "building", "trace": "building", "slo": slo, "stages": [_stage("nx"), _stage("agx", 2)]},
        {"name": "retail", "trace": "retail", "slo": slo, "stages": [_stage("agx"), _stage("nx", 1)]},
    ]
    return {"name": name, "seed": seed, "duration": 1800.0, "devices": DEVICES, "traces": traces,
            "pipelines": pipelines, "federation": {"enabled": True, "every_episodes": 2}}


def _strict_slo(seed: int) -> list[dict]:
    return [_main(seed, slo, f"strict-slo-{int(round(slo * 1000))}ms") for slo in (0.25, 0.2, 0.1)]


def _warm_cold(seed: int) -> dict:
    traces = [
        _trace("familiar", (200, 20, 1.2), (200, 40, 1.5), (200, 70, 1.5)),
        # heavier and burstier than anything seen during pretraining
        _trace("unfamiliar", (6000, 110, 2.0)),
    ]
    pretrain = {
        "duration": 1800.0,
        "pipelines": [_single(f"pre{i}", "familiar", source=f"pre{i}") for i in range(3)],
        "federation": {"enabled": True, "every_episodes": 2},
    }
    pipelines = [
        _single("warm", "unfamiliar", init="pretrained:pre0", source="ood"),
        _single("blank", "unfamiliar", mode="blank", source="ood"),
    ]
    return {"name": "warm-cold", "seed": seed, "duration": 6000.0, "devices": DEVICES, "traces": traces,
            "pipelines": pipelines, "pretrain": pretrain, "federation": {"enabled": False}}


SWITCH_SEGMENT = 900.0  # s per concatenated segment
SWITCH_RATES = (30, 120, 150, 100)


def _crl_switch(seed: int) -> dict:
    traces = [
        _trace("warmup", (600, SWITCH_RATES[0], 1.5)),
        _trace("switch", *[(SWITCH_SEGMENT, r, 1.5) for r in SWITCH_RATES]),
    ]
    pretrain = {"duration": 600.0, "pipelines": [_single("warmup", "warmup")]}
    pipelines = [
        _single("learning", "switch", init="pretrained", source="camera"),
        _single("frozen", "switch", mode="frozen", init="pretrained", source="camera"),
    ]
    return {"name": "crl-switch", "seed": seed, "duration": SWITCH_SEGMENT * len(SWITCH_RATES),
            "devices": DEVICES, "traces": traces, "pipelines": pipelines, "pretrain": pretrain,
            "federation": {"enabled": False}}


FRL_COUNTS = (1, 2, 4, 8)
FRL_SEGMENTS = ((200, 40, 1.5), (200, 120, 2.0), (200, 70, 1.5))
FRL_LR = 6e-3  # faster than the default so every pipeline count converges within the run


def _frl_scale(seed: int) -> list[dict]:
    # pipeline i starts i segments into the cycle, so at any moment the
    # federation sees several load regimes at once
    k = len(FRL_SEGMENTS)
    traces = [_trace(f"phase{i}", *(FRL_SEGMENTS[(i + j) % k] for j in range(k))) for i in range(k)]
    out = []
    for n in FRL_COUNTS:
        pipelines = [_single(f"p{i}", f"phase{i % k}") for i in range(n)]
        out.append({"name": f"frl-scale-{n}", "seed": seed, "duration": 5400.0, "devices": DEVICES,
                    "traces": traces, "pipelines": pipelines, "train": {"lr": FRL_LR},
                    "federation": {"enabled": n > 1, "every_episodes": 2}})
    return out


def _single_head(seed: int) -> dict:
    traces = [_trace("mixed", (300, 30, 1.5), (300, 100, 2.0), (300, 60, 1.5))]
    pipelines = [
        _single("cascade", "mixed", source="camera"),
        _single("single", "mixed", mode="single-head", source="camera"),
    ]
    return {"name": "single-head", "seed": seed, "duration": 3000.0, "devices": DEVICES, "traces": traces,
            "pipelines": pipelines, "federation": {"enabled": False}}


_BUILDERS = {
    "main": lambda s: [_main(s)],
    "strict-slo": _strict_slo,
    "warm-cold": lambda s: [_warm_cold(s)],
    "crl-switch": lambda s: [_crl_switch(s)],
    "frl-scale": _frl_scale,
    "single-head": lambda s: [_single_head(s)],
}

PRESETS = tuple(_BUILDERS)


def preset_dicts(name: str, seed: int | None = None) -> list[dict]:
    if name not in _BUILDERS:
        raise KeyError(f"unknown preset {name!r}; available presets: {', '.join(PRESETS)}")
    return _BUILDERS[name](PRESET_SEEDS[name] if seed is None else seed)


def preset(name: str, seed: int | None = None) -> list[ExperimentConfig]:
    return [parse_config(d) for d in preset_dicts(name, seed)]
