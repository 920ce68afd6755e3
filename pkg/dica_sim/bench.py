"""
Coordinator benchmarks

Runs the same traffic (one config, one seed) through coordinators with
different technique selections and compares their cost. Wall time is taken
inside process_request only, so world stepping does not count; operation
counters are hardware independent.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import ScenarioConfig
from .coordinator import Technique, as_technique, technique_label, validate_techniques
from .layout import ConflictZoneTable, IntersectionLayout
from .metrics import summarize_stats
from .sim_engine import World, build_environment


logger = logging.getLogger(__name__)

BENCH_FIELDS = ['label', 'techniques', 'volume', 'seed', 'requests', 'wall_time',
                'wall_time_mean', 'wall_time_p95', 'comparisons', 'oti_evaluations',
                'loop_iterations', 'bisection_steps', 'alpha1', 'alpha2', 'speedup',
                'ops_ratio', 'max_entry_deviation']


@dataclass
class BenchResult:
    label: str
    techniques: Tuple[str, ...]
    volume: int
    seed: int
    wall_time: float
    request_times: List[float] = field(default_factory=list)
    counters: Dict[str, float] = field(default_factory=dict)
    entry_times: Dict[int, float] = field(default_factory=dict)
    speedup: Optional[float] = None
    ops_ratio: Optional[float] = None
    max_entry_deviation: Optional[float] = None

    @property
    def alpha1(self) -> Optional[float]:
        return self.counters.get('alpha1')

    @property
    def alpha2(self) -> Optional[float]:
        return self.counters.get('alpha2')

    def row(self) -> Dict[str, object]:
        times = np.array(self.request_times) if self.request_times else np.zeros(1)
        return {
            'label': self.label,
            'techniques': ''.join(self.techniques),
            'volume': self.volume,
            'seed': self.seed,
            'requests': len(self.request_times),
            'wall_time': self.wall_time,
            'wall_time_mean': float(times.mean()),
            'wall_time_p95': float(np.percentile(times, 95)),
            'comparisons': self.counters.get('comparisons'),
            'oti_evaluations': self.counters.get('oti_evaluations'),
            'loop_iterations': self.counters.get('loop_iterations'),
            'bisection_steps': self.counters.get('bisection_steps'),
            'alpha1': self.alpha1,
            'alpha2': self.alpha2,
            'speedup': self.speedup,
            'ops_ratio': self.ops_ratio,
            'max_entry_deviation': self.max_entry_deviation,
        }


def ablation_cells(listed: Iterable[str]) -> List[frozenset]:
    """
    Technique selections for an ablation run

    The baseline, each listed technique on its own (bisection always runs on
    top of the conflict zones) and, when more than one is listed, all of them
    together.
    """
    selected = frozenset(as_technique(t) for t in listed)
    cells = [frozenset()]
    for tech in sorted(selected, key=lambda t: t.value):
        cell = frozenset({Technique.B, Technique.D}) if tech is Technique.D else frozenset({tech})
        if cell not in cells:
            cells.append(cell)
    if len(selected) > 1:
        full = selected | ({Technique.B} if Technique.D in selected else set())
        if full not in cells:
            cells.append(frozenset(full))
    return cells


def run_bench_cell(config: ScenarioConfig, techniques: Iterable, seed: Optional[int] = None,
                   environment: Optional[Tuple[IntersectionLayout, ConflictZoneTable]] = None) -> BenchResult:
    """
    Run one scenario with exactly the given techniques enabled

    Raises:
        ValueError: For technique D without B
    """
    selected = validate_techniques(techniques)
    seed = config.seeds[0] if seed is None else seed
    mode = 'enhanced' if selected else 'baseline'
    cfg = config.replace(mode=mode)
    layout, zones = environment or build_environment(cfg)
    world = World(cfg, seed, layout, zones, techniques=[t.value for t in selected])
    world.run()
    controller = world.controller
    stats = controller.stats_log
    label = technique_label(selected)
    result = BenchResult(
        label=label,
        techniques=tuple(sorted(t.value for t in selected)),
        volume=cfg.volume, seed=seed,
        wall_time=float(sum(s.wall_time for s in stats)),
        request_times=[s.wall_time for s in stats],
        counters=summarize_stats(stats),
        entry_times={vin: d.entry_time for vin, d in controller.history.items()},
    )
    logger.info("Bench cell %s: %d requests, %.4f s, %d comparisons", label,
                len(stats), result.wall_time, result.counters['comparisons'])
    return result


def ablation_matrix(config: ScenarioConfig, subsets: Sequence[Iterable],
                    seed: Optional[int] = None) -> List[BenchResult]:
    """
    Benchmark each technique subset on identical traffic

    Cells run one after the other in this process. Speedups, operation ratios
    and entry time deviations are relative to the baseline cell, which is
    added when missing.

    Raises:
        ValueError: If any subset holds technique D without B
    """
    cells = [validate_techniques(s) for s in subsets]
    if frozenset() not in cells:
        cells.insert(0, frozenset())
    environment = build_environment(config)
    results = [run_bench_cell(config, cell, seed, environment) for cell in cells]

    baseline = results[cells.index(frozenset())]
    for r in results:
        if r.wall_time > 0:
            r.speedup = baseline.wall_time / r.wall_time
        base_ops = baseline.counters.get('comparisons') or 0
        if r.counters.get('comparisons'):
            r.ops_ratio = r.counters['comparisons'] / base_ops if base_ops else None
        common = set(r.entry_times) & set(baseline.entry_times)
        if common:
            r.max_entry_deviation = max(abs(r.entry_times[v] - baseline.entry_times[v])
                                        for v in common)
    return results


def write_bench_csv(path: str, results: Sequence[BenchResult]):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        for r in results:
            writer.writerow(r.row())
