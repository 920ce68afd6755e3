"""
Simulation measurements

Trip times, throughput, the flow rate ratio and waiting count time series,
and the inter-vehicle distance samples taken inside the intersection region,
plus the writers that export them as text and CSV files.
"""
import csv
import logging
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tabulate import tabulate

from .geometry import OrientedRect, rect_distance


logger = logging.getLogger(__name__)

# Inter-vehicle distance histogram bin width (m)
HISTOGRAM_BIN = 0.25

SERIES_NAMES = ('flow_ratio', 'waiting')


class DuplicateTripError(ValueError):
    """Raised when a trip is recorded twice for the same vehicle"""
    pass


class MetricsError(ValueError):
    """Raised for inconsistent measurement input"""
    pass


@dataclass(frozen=True)
class Trip:
    vin: int
    enter_time: float
    exit_time: float
    major: bool = True

    @property
    def duration(self) -> float:
        return self.exit_time - self.enter_time


def summarize_stats(stats_log: Iterable) -> Dict[str, Any]:
    """
    Totals and filter ratios over the per-request coordinator counters

    alpha1 is the mean fraction of confirmed vehicles kept by the route and
    time filter; alpha2 the mean fraction of requester occupancies inside
    conflict windows.
    """
    stats = list(stats_log)
    summary = {
        'requests': len(stats),
        'wall_time': float(sum(s.wall_time for s in stats)),
        'comparisons': int(sum(s.comparisons for s in stats)),
        'oti_evaluations': int(sum(s.oti_evaluations for s in stats)),
        'loop_iterations': int(sum(s.loop_iterations for s in stats)),
        'bisection_steps': int(sum(s.bisection_steps for s in stats)),
        'alpha1': None,
        'alpha2': None,
    }
    if stats:
        times = np.array([s.wall_time for s in stats])
        summary['wall_time_mean'] = float(times.mean())
        summary['wall_time_p95'] = float(np.percentile(times, 95))
        kept = [s.filtered_size / s.confirmed_size for s in stats if s.confirmed_size]
        inside = [s.window_occupancies / s.occupancies for s in stats if s.occupancies]
        summary['alpha1'] = float(np.mean(kept)) if kept else None
        summary['alpha2'] = float(np.mean(inside)) if inside else None
    return summary


@dataclass
class MetricsReport:
    """Aggregated results of one run, or the average of several seeds"""
    mode: str
    volume: int
    seeds: List[int]
    unbalanced: bool
    generated: int
    crossed: int
    avg_trip_time: float
    trip_time_sd: float
    pooled_sd: float
    throughput: float
    effective_avg_trip_time: float
    major_avg_trip_time: Optional[float] = None
    minor_avg_trip_time: Optional[float] = None
    min_distance: Optional[float] = None
    max_wait: float = 0.0
    trip_times: List[float] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)
    series: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    coordinator: Dict[str, Any] = field(default_factory=dict)
    signal_plan: Optional[Dict[str, Any]] = None
    conflicts: Optional[int] = None
    runs: int = 1
    sim_time: float = 0.0

    def histogram(self, bin_width: float = HISTOGRAM_BIN) -> Tuple[np.ndarray, np.ndarray]:
        """(edges, counts) of the inter-vehicle distance samples"""
        if not self.distances:
            return np.array([0.0, bin_width]), np.array([0])
        d = np.asarray(self.distances)
        lo = math.floor(d.min() / bin_width) * bin_width
        hi = (math.floor(d.max() / bin_width) + 1) * bin_width
        n_bins = max(1, int(round((hi - lo) / bin_width)))
        counts, edges = np.histogram(d, bins=n_bins, range=(lo, lo + n_bins * bin_width))
        return edges, counts

    def summary(self) -> Dict[str, Any]:
        """Scalar fields only, for tables and the results database"""
        skip = {'trip_times', 'distances', 'series', 'coordinator', 'signal_plan'}
        out = {k: v for k, v in asdict(self).items() if k not in skip}
        out['seeds'] = ','.join(str(s) for s in self.seeds)
        out['coordinator_wall_time'] = self.coordinator.get('wall_time')
        return out


class MetricsCollector:
    """Measurements owned by one simulated world"""

    def __init__(self):
        self.trips: Dict[int, Trip] = {}
        self.distances: List[float] = []
        self.series: Dict[str, List[Tuple[float, float]]] = {name: [] for name in SERIES_NAMES}
        self.waits: List[float] = []

    def record_trip(self, vin: int, enter_time: float, exit_time: float, major: bool = True):
        """
        Log the trip of a vehicle that has completely crossed the intersection

        Raises:
            DuplicateTripError: If the vehicle's trip was already recorded
            MetricsError: If the exit does not follow the entry
        """
        if vin in self.trips:
            raise DuplicateTripError(f"Trip of vehicle {vin} already recorded")
        if exit_time <= enter_time:
            raise MetricsError(f"Invalid trip for vehicle {vin}: exit {exit_time} <= enter {enter_time}")
        self.trips[vin] = Trip(vin, enter_time, exit_time, major)

    def record_wait(self, wait: float):
        """Time between entering the communication region and the final confirmation"""
        self.waits.append(wait)

    def sample_intersection_distances(self, rects: Sequence[OrientedRect], t: float = 0.0) -> int:
        """Append the pairwise distances between vehicles inside the region; returns the count"""
        n = 0
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                self.distances.append(rect_distance(rects[i], rects[j]))
                n += 1
        if n:
            logger.debug("t=%.2f: %d distance samples", t, n)
        return n

    def record_series(self, t: float, generated: int, exited: int, waiting: int):
        ratio = generated / exited if exited > 0 else 1.0
        self.series['flow_ratio'].append((t, max(ratio, 1.0)))
        self.series['waiting'].append((t, float(waiting)))

    def finalize(self, generated: int, mode: str = '', volume: int = 0, seed: int = 0,
                 unbalanced: bool = False, **extra) -> MetricsReport:
        """
        Compute the aggregates of a finished run

        Raises:
            MetricsError: If more vehicles crossed than were generated
        """
        crossed = len(self.trips)
        if generated < crossed:
            raise MetricsError(f"Generated count {generated} is below the crossed count {crossed}")
        durations = np.array([t.duration for t in self.trips.values()])
        if len(durations):
            avg, sd = float(durations.mean()), float(durations.std())
        else:
            avg, sd = 0.0, 0.0
        throughput = crossed / generated if generated else 1.0
        effective = avg / throughput if throughput > 0 else math.inf

        major = [t.duration for t in self.trips.values() if t.major]
        minor = [t.duration for t in self.trips.values() if not t.major]
        return MetricsReport(
            mode=mode, volume=volume, seeds=[seed], unbalanced=unbalanced,
            generated=generated, crossed=crossed,
            avg_trip_time=avg, trip_time_sd=sd, pooled_sd=sd,
            throughput=throughput, effective_avg_trip_time=effective,
            major_avg_trip_time=float(np.mean(major)) if major else None,
            minor_avg_trip_time=float(np.mean(minor)) if minor else None,
            min_distance=float(min(self.distances)) if self.distances else None,
            max_wait=float(max(self.waits)) if self.waits else 0.0,
            trip_times=durations.tolist(),
            distances=list(self.distances),
            series={k: list(v) for k, v in self.series.items()},
            **extra,
        )


def _mean_of(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _average_series(reports: List[MetricsReport]) -> Dict[str, List[Tuple[float, float]]]:
    out = {}
    for name in SERIES_NAMES:
        runs = [r.series.get(name, []) for r in reports]
        n = min((len(s) for s in runs), default=0)
        out[name] = [(runs[0][k][0], float(np.mean([s[k][1] for s in runs]))) for k in range(n)]
    return out


def average_reports(reports: List[MetricsReport]) -> MetricsReport:
    """
    Average runs of the same scenario over seeds

    The per-run standard deviation is averaged; pooled_sd is taken over all
    trips of all runs. The effective average trip time is recomputed from the
    averaged trip time and throughput.
    """
    if not reports:
        raise MetricsError("No reports to average")
    if len(reports) == 1:
        return reports[0]
    trips = [t for r in reports for t in r.trip_times]
    avg = float(np.mean([r.avg_trip_time for r in reports]))
    throughput = float(np.mean([r.throughput for r in reports]))
    coordinator = {}
    for key in reports[0].coordinator:
        values = [r.coordinator.get(key) for r in reports]
        if all(isinstance(v, (int, float)) for v in values):
            coordinator[key] = sum(values) if key in ('requests', 'wall_time', 'comparisons',
                                                      'oti_evaluations', 'loop_iterations',
                                                      'bisection_steps') else _mean_of(values)
        else:
            coordinator[key] = _mean_of(values)
    distances = [d for r in reports for d in r.distances]
    conflicts = [r.conflicts for r in reports if r.conflicts is not None]
    first = reports[0]
    return MetricsReport(
        mode=first.mode, volume=first.volume, seeds=[s for r in reports for s in r.seeds],
        unbalanced=first.unbalanced,
        generated=sum(r.generated for r in reports), crossed=sum(r.crossed for r in reports),
        avg_trip_time=avg,
        trip_time_sd=float(np.mean([r.trip_time_sd for r in reports])),
        pooled_sd=float(np.std(trips)) if trips else 0.0,
        throughput=throughput,
        effective_avg_trip_time=avg / throughput if throughput > 0 else math.inf,
        major_avg_trip_time=_mean_of([r.major_avg_trip_time for r in reports]),
        minor_avg_trip_time=_mean_of([r.minor_avg_trip_time for r in reports]),
        min_distance=min(distances) if distances else None,
        max_wait=max(r.max_wait for r in reports),
        trip_times=trips,
        distances=distances,
        series=_average_series(reports),
        coordinator=coordinator,
        signal_plan=first.signal_plan,
        conflicts=sum(conflicts) if conflicts else None,
        runs=sum(r.runs for r in reports),
        sim_time=max(r.sim_time for r in reports),
    )


# =============================================================================
# Output
# =============================================================================

def _fmt(value, digits: int = 3):
    if value is None:
        return '-'
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return value


def format_report(report: MetricsReport) -> str:
    """Human-readable report (standard deviations are population values)"""
    rows = [
        ['Mode', report.mode],
        ['Volume (veh/10 min)', report.volume],
        ['Seeds', ', '.join(str(s) for s in report.seeds)],
        ['Unbalanced', 'yes' if report.unbalanced else 'no'],
        ['Generated', report.generated],
        ['Crossed', report.crossed],
        ['Average trip time (s)', _fmt(report.avg_trip_time)],
        ['Trip time SD, per run (s)', _fmt(report.trip_time_sd)],
        ['Trip time SD, pooled (s)', _fmt(report.pooled_sd)],
        ['Throughput', _fmt(report.throughput, 4)],
        ['Effective average trip time (s)', _fmt(report.effective_avg_trip_time)],
        ['Major road average (s)', _fmt(report.major_avg_trip_time)],
        ['Minor road average (s)', _fmt(report.minor_avg_trip_time)],
        ['Minimum distance in region (m)', _fmt(report.min_distance)],
        ['Distance samples', len(report.distances)],
        ['Longest wait for confirmation (s)', _fmt(report.max_wait)],
    ]
    if report.conflicts is not None:
        rows.append(['Space-time conflicts (verified)', report.conflicts])
    lines = ["Simulation report (standard deviations are population values)", "",
             tabulate(rows, tablefmt='simple')]

    if report.coordinator:
        c = report.coordinator
        lines += ["", "Coordinator", tabulate([
            ['Requests', c.get('requests')],
            ['Wall time (s)', _fmt(c.get('wall_time'), 4)],
            ['Comparisons', c.get('comparisons')],
            ['OTI evaluations', c.get('oti_evaluations')],
            ['Loop iterations', c.get('loop_iterations')],
            ['alpha1 (kept / confirmed)', _fmt(c.get('alpha1'))],
            ['alpha2 (in window / occupancies)', _fmt(c.get('alpha2'))],
        ], tablefmt='simple')]

    if report.signal_plan:
        plan = report.signal_plan
        rows = [[i + 1, ' '.join(p['movements']), _fmt(p['green'], 2), _fmt(p['yellow'], 1),
                 _fmt(p['flow_ratio'], 4)] for i, p in enumerate(plan['phases'])]
        lines += ["", f"Signal plan: C0 = {plan['cycle_length']:.2f} s, "
                      f"L = {plan['lost_time']:.0f} s, Y = {plan['flow_ratio_sum']:.4f}",
                  tabulate(rows, headers=['Phase', 'Movements', 'Green', 'Yellow', 'y'],
                           tablefmt='simple')]
    return '\n'.join(lines)


def write_series_csv(path: str, points: Sequence[Tuple[float, float]]):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['t', 'value'])
        for t, value in points:
            writer.writerow([f"{t:.2f}", value])


def write_histogram_csv(path: str, report: MetricsReport, bin_width: float = HISTOGRAM_BIN):
    edges, counts = report.histogram(bin_width)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['bin_lo', 'bin_hi', 'count'])
        for lo, hi, count in zip(edges[:-1], edges[1:], counts):
            writer.writerow([f"{lo:.2f}", f"{hi:.2f}", int(count)])


def write_metrics_csv(path: str, reports: Sequence[MetricsReport]):
    """One row of scalar metrics per report"""
    rows = [r.summary() for r in reports]
    if not rows:
        return
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_report(report: MetricsReport, out_dir: str) -> List[str]:
    """
    Write report.txt, metrics.csv, series_*.csv and histogram.csv

    Returns:
        Paths of the written files
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, 'report.txt')
    with open(path, 'w') as f:
        f.write(format_report(report) + '\n')
    written.append(path)

    path = os.path.join(out_dir, 'metrics.csv')
    write_metrics_csv(path, [report])
    written.append(path)

    for name, points in report.series.items():
        path = os.path.join(out_dir, f"series_{name}.csv")
        write_series_csv(path, points)
        written.append(path)

    path = os.path.join(out_dir, 'histogram.csv')
    write_histogram_csv(path, report)
    written.append(path)
    logger.info("Wrote %d result files to %s", len(written), out_dir)
    return written
