"""Experiment loop for sequential and batch search, plus baselines and CSV
result persistence.

Each (config, seed) run is fully deterministic: per-seed random streams
are split from the seed with a fixed scheme, and the results CSV is
byte-stable across reruns (wall-clock timing is recorded only when
explicitly enabled, since measured times would break that).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import gp, select
from .arch import canonical_key
from .bench import BenchmarkOracle, load_tabular, synth_space
from .errors import ConfigError, RankDeficient, SingularKernel
from .pool import SpaceSpec, generate_pool, mutate
from .select import BatchStrategy
from .trees import TaxonomySpec, default_taxonomy, load_taxonomy
from .tw import KernelParams, PairDistanceCache

log = logging.getLogger(__name__)

SEQUENTIAL_OPTIMIZERS = ("bo-tw", "bo-tw-2g", "random", "evolution")
BATCH_OPTIMIZERS = tuple(s.value for s in BatchStrategy)
RESULT_HEADER = ["seed", "iter", "key", "val", "best_val", "best_test", "cum_cost", "wall_ms"]
SUMMARY_HEADER = ["iteration", "median", "q25", "q75", "n_seeds"]


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "sequential"  # "sequential" | "batch"
    optimizer: str = "bo-tw"
    budget: int = 40
    batch_size: int = 5
    pool_size: int = 100
    init_fraction: float = 0.1
    kappa: float = 2.0
    ngram: int = 1
    seeds: tuple = (0,)
    ops: tuple = ("cv1", "cv3", "mp3")
    max_nodes: int = 4
    min_nodes: int = 3
    max_edges: int = 6
    space_seed: int = 0
    tabular: str | None = None
    taxonomy_path: str | None = None
    out: str | None = None
    quality_sign: int = 1
    mutate_rounds: int = 5
    hyper_starts: int = 3
    workers: int = 1
    record_timing: bool = False

    def n_init(self) -> int:
        return max(1, math.ceil(self.init_fraction * self.budget))

    def validated(self) -> "ExperimentConfig":
        cfg = self
        if cfg.mode not in ("sequential", "batch"):
            raise ConfigError(f"unknown mode {cfg.mode!r}")
        if cfg.mode == "sequential" and cfg.optimizer not in SEQUENTIAL_OPTIMIZERS:
            raise ConfigError(
                f"sequential optimizer must be one of {SEQUENTIAL_OPTIMIZERS}"
            )
        if cfg.mode == "batch" and cfg.optimizer not in BATCH_OPTIMIZERS:
            raise ConfigError(f"batch optimizer must be one of {BATCH_OPTIMIZERS}")
        if cfg.optimizer == "bo-tw-2g" and cfg.ngram != 2:
            cfg = replace(cfg, ngram=2)
        if cfg.budget < cfg.n_init():
            raise ConfigError("budget must cover the initial random draws")
        if cfg.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not cfg.seeds:
            raise ConfigError("at least one seed required")
        if cfg.ngram not in (1, 2):
            raise ConfigError("ngram must be 1 or 2")
        if cfg.quality_sign not in (1, -1):
            raise ConfigError("quality_sign must be +1 or -1")
        if not 0.0 < cfg.init_fraction <= 1.0:
            raise ConfigError("init_fraction must be in (0, 1]")
        return cfg


@dataclass
class RunRecord:
    seed: int
    iteration: int
    key: str
    val: float
    best_val: float
    best_test: float
    cum_cost: float
    wall_ms: float = 0.0


def parse_seeds(text: str):
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in text.split(",") if s.strip())


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; later CLI flags override these."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def build_oracle(config: ExperimentConfig) -> BenchmarkOracle:
    if config.tabular:
        return load_tabular(config.tabular)
    space = SpaceSpec(
        vocab=config.ops,
        max_nodes=config.max_nodes,
        max_edges=config.max_edges,
        min_nodes=config.min_nodes,
    )
    return synth_space(space, config.space_seed)


def _taxonomy_for(config: ExperimentConfig, space: SpaceSpec) -> TaxonomySpec:
    if config.taxonomy_path:
        taxonomy = load_taxonomy(config.taxonomy_path)
        taxonomy.check_vocab(space.vocab)
        return taxonomy
    taxonomy = default_taxonomy()
    if set(taxonomy.leaf_labels()) == set(space.vocab):
        return taxonomy
    return TaxonomySpec.flat(space.vocab)


class _Evaluator:
    """Tracks evaluations, best-so-far values, and emitted records."""

    def __init__(self, oracle: BenchmarkOracle, seed: int, record_timing: bool):
        self.oracle = oracle
        self.seed = seed
        self.record_timing = record_timing
        self.records = []
        self.evaluated = []  # (arch, val)
        self.keys = set()
        self.best_val = -np.inf
        self.best_test = np.nan
        self.cum_cost = 0.0
        self._t0 = time.monotonic()

    def evaluate(self, arch):
        key = canonical_key(arch)
        if key in self.keys:
            raise RuntimeError(f"architecture evaluated twice: {key}")
        val, test, cost = self.oracle.table[key]
        self.keys.add(key)
        self.evaluated.append((arch, val))
        self.cum_cost += cost
        if val > self.best_val:
            self.best_val = val
            self.best_test = test
        wall = (time.monotonic() - self._t0) * 1000.0 if self.record_timing else 0.0
        self.records.append(
            RunRecord(
                seed=self.seed,
                iteration=len(self.records) + 1,
                key=key,
                val=val,
                best_val=self.best_val,
                best_test=self.best_test,
                cum_cost=self.cum_cost,
                wall_ms=wall,
            )
        )

    @property
    def count(self):
        return len(self.records)


def _key_stream(oracle: BenchmarkOracle, rng):
    """Deterministic permutation of the oracle's keys."""
    keys = list(oracle.sorted_keys)
    order = rng.permutation(len(keys))
    return [keys[int(i)] for i in order]


def _run_one_seed(config: ExperimentConfig, oracle, cache, seed: int):
    ss = np.random.SeedSequence([int(seed), 0x07E5])
    init_ss, pool_ss, select_ss, hyper_ss = ss.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    pool_rng = np.random.default_rng(pool_ss)
    select_rng = np.random.default_rng(select_ss)
    hyper_rng = np.random.default_rng(hyper_ss)

    evaluator = _Evaluator(oracle, seed, config.record_timing)
    stream = _key_stream(oracle, init_rng)
    space = oracle.space
    taxonomy = cache.taxonomy

    def next_unevaluated():
        for key in stream:
            if key not in evaluator.keys:
                return oracle.archs[key]
        raise RuntimeError("search space exhausted")

    for _ in range(min(config.n_init(), config.budget)):
        evaluator.evaluate(next_unevaluated())

    if config.optimizer == "random":
        while evaluator.count < config.budget:
            evaluator.evaluate(next_unevaluated())
        return evaluator.records

    if config.optimizer == "evolution":
        while evaluator.count < config.budget:
            child_rng = np.random.default_rng(pool_rng.integers(2**31))
            elites = sorted(
                evaluator.evaluated,
                key=lambda pair: (-pair[1], canonical_key(pair[0])),
            )[:10]
            parent = elites[int(child_rng.integers(len(elites)))][0]
            chosen = None
            for _ in range(25):
                child = mutate(parent, space, child_rng)
                if canonical_key(child) in oracle.table and canonical_key(
                    child
                ) not in evaluator.keys:
                    chosen = child
                    break
            evaluator.evaluate(chosen if chosen is not None else next_unevaluated())
        return evaluator.records

    params = KernelParams(1.0, 1.0, 1.0, noise_var=1e-4)
    batch_mode = config.mode == "batch"
    while evaluator.count < config.budget:
        archs = [a for a, _ in evaluator.evaluated]
        ys = [v for _, v in evaluator.evaluated]
        hyper_seed = int(hyper_rng.integers(2**31))
        try:
            params = gp.optimize_hypers(
                archs,
                ys,
                starts=config.hyper_starts,
                seed=hyper_seed,
                n=config.ngram,
                taxonomy=taxonomy,
                cache=cache,
                init=params,
            )
        except SingularKernel:
            log.warning("seed %d: hyperparameter fit failed, reusing previous", seed)
        model = gp.fit(
            archs, ys, params, n=config.ngram, taxonomy=taxonomy, cache=cache
        )

        pool_seed = int(pool_rng.integers(2**31))
        pool = generate_pool(
            model,
            evaluator.evaluated,
            space,
            config.pool_size,
            mutate_rounds=config.mutate_rounds,
            kappa=config.kappa,
            seed=pool_seed,
        )
        pool = [a for a in pool if canonical_key(a) in oracle.table]
        if not pool:
            pool = [next_unevaluated()]

        select_seed = int(select_rng.integers(2**31))
        remaining = config.budget - evaluator.count
        if batch_mode:
            b = min(config.batch_size, remaining, len(pool))
            try:
                chosen = select.batch_select(
                    model,
                    pool,
                    config.optimizer,
                    b,
                    kappa=config.kappa,
                    seed=select_seed,
                    quality_sign=config.quality_sign,
                )
            except RankDeficient as exc:
                log.warning("seed %d: %s; falling back to bucb", seed, exc)
                chosen = select.batch_select(
                    model, pool, "bucb", b, kappa=config.kappa, seed=select_seed
                )
        else:
            chosen = [select.argmax_acquisition(model, pool, "ucb", config.kappa)]
        for arch in chosen:
            evaluator.evaluate(arch)
    return evaluator.records


def run_sequential(config: ExperimentConfig, oracle: BenchmarkOracle):
    config = config.validated()
    if config.mode != "sequential":
        raise ConfigError("run_sequential requires mode=sequential")
    return _run(config, oracle)


def run_batch(config: ExperimentConfig, oracle: BenchmarkOracle):
    config = config.validated()
    if config.mode != "batch":
        raise ConfigError("run_batch requires mode=batch")
    return _run(config, oracle)


def run_baseline_evolution(config: ExperimentConfig, oracle: BenchmarkOracle):
    config = replace(config, optimizer="evolution", mode="sequential").validated()
    return _run(config, oracle)


def _run(config: ExperimentConfig, oracle: BenchmarkOracle):
    taxonomy = _taxonomy_for(config, oracle.space)
    cache = PairDistanceCache(taxonomy, config.ngram)
    seeds = list(config.seeds)
    if config.workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool_exec:
            futures = [
                pool_exec.submit(_run_one_seed, config, oracle, cache, s)
                for s in seeds
            ]
            per_seed = [f.result() for f in futures]
    else:
        per_seed = [_run_one_seed(config, oracle, cache, s) for s in seeds]
    records = [rec for recs in per_seed for rec in recs]
    records.sort(key=lambda r: (r.seed, r.iteration))
    return records


def run_experiment(config: ExperimentConfig):
    """Build the oracle and dispatch on mode; returns all records."""
    config = config.validated()
    oracle = build_oracle(config)
    return _run(config, oracle), oracle


def write_records(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.seed,
                    r.iteration,
                    r.key,
                    repr(r.val),
                    repr(r.best_val),
                    repr(r.best_test),
                    repr(r.cum_cost),
                    repr(r.wall_ms),
                ]
            )


def read_records(path):
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RESULT_HEADER:
            raise ConfigError(f"unexpected results header {header}")
        for row in reader:
            records.append(
                RunRecord(
                    seed=int(row[0]),
                    iteration=int(row[1]),
                    key=row[2],
                    val=float(row[3]),
                    best_val=float(row[4]),
                    best_test=float(row[5]),
                    cum_cost=float(row[6]),
                    wall_ms=float(row[7]),
                )
            )
    return records


def summarize(records):
    """Per-iteration median and interquartile band of best_val across seeds."""
    if not records:
        raise ValueError("no records to summarize")
    by_iter: dict = {}
    for r in records:
        by_iter.setdefault(r.iteration, []).append(r.best_val)
    rows = []
    for iteration in sorted(by_iter):
        vals = np.asarray(by_iter[iteration])
        rows.append(
            (
                iteration,
                float(np.median(vals)),
                float(np.percentile(vals, 25)),
                float(np.percentile(vals, 75)),
                int(vals.size),
            )
        )
    return rows


def write_summary(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for iteration, med, q25, q75, n_seeds in rows:
            writer.writerow([iteration, repr(med), repr(q25), repr(q75), n_seeds])
