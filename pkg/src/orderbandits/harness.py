"""Experiment orchestration: (policy x environment x seed) grids to CSVs.

Seeding discipline: the master seed spawns one reward stream per repetition
(shared by every policy, so two policies see identical reward noise while
their action sequences coincide) and one private stream per (repetition,
policy) for policy randomness.  Regret is always accounted against the true
means, never the sampled rewards.  Reruns of the same config are
byte-identical in the trace and summary value columns; only wall-clock
timings vary.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .environments import (
    BanditInstance,
    SyntheticConfig,
    child_seed,
    generate_synthetic,
)
from .errors import ConfigError
from .movielens import DEFAULT_SIGMA, load_processed
from .orders import StateModelSet
from .policies import POLICIES, PolicyConfig, make_policy

_TOP_KEYS = {"environment", "policies", "T", "N", "seed", "t_proj", "output"}
_SYNTH_KEYS = {"type", "k", "m", "gamma", "sigma", "q"}
_ML_KEYS = {"type", "dir", "sigma"}
_POLICY_SPEC_KEYS = {"key", "c", "t_proj"}

TRACE_COLUMNS = ("policy", "instance", "seed", "t", "arm", "inst_regret", "cum_regret")
SUMMARY_COLUMNS = ("policy", "mean_cum_regret", "se", "se_degenerate", "seconds")


@dataclass
class ExperimentConfig:
    environment: dict
    policies: list[dict]
    T: int
    N: int
    seed: int
    t_proj: int | None
    output: str | None


@dataclass
class RegretTrace:
    policy: str
    instance: int
    seed: int
    arms: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray


@dataclass
class SummaryRow:
    policy: str
    mean_cum_regret: float
    se: float
    se_degenerate: bool
    seconds: float


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config mapping; unknown keys anywhere are hard errors."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    for key in ("environment", "policies", "T", "N"):
        _require(key in raw, f"missing config key {key!r}")

    env = dict(raw["environment"])
    _require("type" in env, "environment needs a 'type'")
    if env["type"] == "synthetic":
        unknown = set(env) - _SYNTH_KEYS
        _require(not unknown, f"unknown synthetic keys: {sorted(unknown)}")
        for key in ("k", "m"):
            _require(key in env, f"synthetic environment needs {key!r}")
        env.setdefault("gamma", 1.0)
        env.setdefault("sigma", 1.0)
        env.setdefault("q", 1.0)
    elif env["type"] == "movielens":
        unknown = set(env) - _ML_KEYS
        _require(not unknown, f"unknown movielens keys: {sorted(unknown)}")
        _require("dir" in env, "movielens environment needs 'dir'")
    else:
        raise ConfigError(f"unknown environment type {env['type']!r}")

    raw_policies = raw["policies"]
    _require(isinstance(raw_policies, list) and raw_policies, "policies must be a non-empty list")
    policies = []
    for spec in raw_policies:
        if isinstance(spec, str):
            spec = {"key": spec}
        else:
            spec = dict(spec)
            unknown = set(spec) - _POLICY_SPEC_KEYS
            _require(not unknown, f"unknown policy keys: {sorted(unknown)}")
        _require("key" in spec, "each policy spec needs a 'key'")
        _require(spec["key"] in POLICIES, f"unknown policy key {spec['key']!r}")
        _require(float(spec.get("c", 1.0)) > 0, "policy c must be positive")
        _require(int(spec.get("t_proj", 1)) >= 1, "policy t_proj must be >= 1")
        policies.append(spec)

    T, N = int(raw["T"]), int(raw["N"])
    _require(T >= 1 and N >= 1, "T and N must be >= 1")
    t_proj = raw.get("t_proj")
    _require(t_proj is None or int(t_proj) >= 1, "t_proj must be >= 1")
    return ExperimentConfig(
        environment=env,
        policies=policies,
        T=T,
        N=N,
        seed=int(raw.get("seed", 0)),
        t_proj=None if t_proj is None else int(t_proj),
        output=raw.get("output"),
    )


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(raw)


class _Environment:
    """Per-repetition (instance, full prior, revealed prior) provider."""

    k: int
    sigma: float
    default_t_proj: int

    def build(self, rep: int, master_seed: int):
        raise NotImplementedError


class _SyntheticEnv(_Environment):
    default_t_proj = 1

    def __init__(self, env: dict):
        self.k = int(env["k"])
        self.sigma = float(env["sigma"])
        self._base = SyntheticConfig(
            k=self.k, m=int(env["m"]), gamma=float(env["gamma"]),
            sigma=self.sigma, q=float(env["q"]),
        )

    def build(self, rep: int, master_seed: int):
        env_seed = child_seed(master_seed, 0, rep)
        cfg = replace(self._base, seed=env_seed)
        full, instances, revealed = generate_synthetic(cfg, n_instances=1)
        return instances[0], full, revealed, env_seed


class _MovieLensEnv(_Environment):
    default_t_proj = 10

    def __init__(self, env: dict):
        try:
            self.instances, self.models, meta = load_processed(env["dir"])
        except OSError as e:
            raise ConfigError(f"cannot load movielens dir {env['dir']}: {e}") from None
        self.k = int(meta["k"])
        self.sigma = float(env.get("sigma", meta.get("sigma", DEFAULT_SIGMA)))

    def build(self, rep: int, master_seed: int):
        if rep >= len(self.instances):
            raise ConfigError(
                f"N exceeds the {len(self.instances)} prepared instances"
            )
        env_seed = child_seed(master_seed, 0, rep)
        base = self.instances[rep]
        inst = BanditInstance(base.means, self.sigma, base.true_state, seed=env_seed)
        return inst, self.models, self.models, env_seed


def build_environment(env: dict) -> _Environment:
    return _SyntheticEnv(env) if env["type"] == "synthetic" else _MovieLensEnv(env)


def _models_for(key: str, full: StateModelSet, revealed: StateModelSet):
    if key in ("lob_ucb", "lob_ts"):
        return revealed
    if key in ("m_ucb", "m_ts", "topm_ucb"):
        return full
    return None


def play(policy, instance: BanditInstance, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Drive T rounds of select / pull / update; returns (arms, regrets)."""
    arms = np.empty(T, dtype=np.int64)
    regret = np.empty(T)
    for t in range(T):
        a = policy.select()
        r = instance.pull(a)
        policy.update(a, r)
        arms[t] = a
        regret[t] = instance.regret_of(a)
    return arms, regret


def run_experiment(
    config: ExperimentConfig, revealed_override: StateModelSet | None = None
) -> tuple[list[RegretTrace], list[SummaryRow]]:
    """Run the full (repetition x policy) grid of the config.

    ``revealed_override`` replaces the revealed prior handed to the
    order-exploiting policies (used by the CLI --states flag).
    """
    env = build_environment(config.environment)
    seconds: dict[str, float] = {}
    traces: list[RegretTrace] = []
    for rep in range(config.N):
        instance, full, revealed, env_seed = env.build(rep, config.seed)
        if revealed_override is not None:
            revealed = revealed_override
        for pidx, spec in enumerate(config.policies):
            key = spec["key"]
            try:
                pol_config = PolicyConfig(
                    c=float(spec.get("c", env.sigma)),
                    t_proj=int(spec.get("t_proj", config.t_proj or env.default_t_proj)),
                    models=_models_for(key, full, revealed),
                )
                policy = make_policy(
                    key, env.k, pol_config, child_seed(config.seed, 1, rep, pidx)
                )
                started = time.perf_counter()
                arms, inst_regret = play(policy, instance.fresh(), config.T)
            except Exception as e:
                raise RuntimeError(
                    f"repetition {rep}, policy {key!r}, env seed {env_seed}: {e}"
                ) from e
            seconds[key] = seconds.get(key, 0.0) + time.perf_counter() - started
            traces.append(
                RegretTrace(
                    policy=key, instance=rep, seed=env_seed,
                    arms=arms, inst_regret=inst_regret,
                    cum_regret=np.cumsum(inst_regret),
                )
            )
    return traces, summarize(traces, seconds)


def summarize(
    traces: list[RegretTrace], seconds: dict[str, float] | None = None
) -> list[SummaryRow]:
    """Per-policy mean terminal regret and standard error sigma/sqrt(N),
    aggregated over sorted keys so the reduction is order-independent."""
    terminal: dict[str, list[float]] = {}
    for tr in sorted(traces, key=lambda tr: (tr.policy, tr.instance)):
        terminal.setdefault(tr.policy, []).append(float(tr.cum_regret[-1]))
    rows = []
    for policy in sorted(terminal):
        values = np.array(terminal[policy])
        degenerate = len(values) < 2
        se = 0.0 if degenerate else float(values.std(ddof=1) / math.sqrt(len(values)))
        rows.append(
            SummaryRow(
                policy=policy,
                mean_cum_regret=float(values.mean()),
                se=se,
                se_degenerate=degenerate,
                seconds=0.0 if seconds is None else seconds.get(policy, 0.0),
            )
        )
    return rows


def resolved_config_dict(config: ExperimentConfig) -> dict:
    env = build_environment(config.environment)
    resolved = {
        "environment": config.environment,
        "policies": [
            {
                "key": spec["key"],
                "c": float(spec.get("c", env.sigma)),
                "t_proj": int(spec.get("t_proj", config.t_proj or env.default_t_proj)),
            }
            for spec in config.policies
        ],
        "T": config.T,
        "N": config.N,
        "seed": config.seed,
        "t_proj": config.t_proj,
        "output": config.output,
    }
    canonical = json.dumps(resolved, sort_keys=True)
    resolved["config_hash"] = hashlib.sha256(canonical.encode()).hexdigest()
    return resolved


def emit_results(
    traces: list[RegretTrace],
    summary: list[SummaryRow],
    out_dir,
    resolved: dict | None = None,
) -> dict[str, Path]:
    """Write traces.csv, summary.csv and the resolved config (with content
    hash).  Floats are written with repr so reruns are byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "traces": out / "traces.csv",
        "summary": out / "summary.csv",
        "config": out / "resolved_config.json",
    }
    with open(paths["traces"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for tr in sorted(traces, key=lambda tr: (tr.policy, tr.instance)):
            for t in range(len(tr.arms)):
                writer.writerow(
                    [
                        tr.policy, tr.instance, tr.seed, t + 1, int(tr.arms[t]),
                        repr(float(tr.inst_regret[t])), repr(float(tr.cum_regret[t])),
                    ]
                )
    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow(
                [
                    row.policy, repr(row.mean_cum_regret), repr(row.se),
                    int(row.se_degenerate), repr(row.seconds),
                ]
            )
    if resolved is not None:
        paths["config"].write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return paths


def read_traces(path) -> list[RegretTrace]:
    """Load a traces.csv back into RegretTrace objects (exact floats)."""
    grouped: dict[tuple[str, int], dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["policy"], int(row["instance"]))
            entry = grouped.setdefault(
                key, {"seed": int(row["seed"]), "arms": [], "inst": [], "cum": []}
            )
            entry["arms"].append(int(row["arm"]))
            entry["inst"].append(float(row["inst_regret"]))
            entry["cum"].append(float(row["cum_regret"]))
    return [
        RegretTrace(
            policy=policy, instance=instance, seed=entry["seed"],
            arms=np.array(entry["arms"], dtype=np.int64),
            inst_regret=np.array(entry["inst"]),
            cum_regret=np.array(entry["cum"]),
        )
        for (policy, instance), entry in grouped.items()
    ]


def report_from_traces(trace_dir) -> list[SummaryRow]:
    """Re-aggregate summary rows from an output directory's traces.csv."""
    return summarize(read_traces(Path(trace_dir) / "traces.csv"))
