"""Wall-clock comparison of the raw OPFR pipeline against end-to-end PFH."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .cfgen import cloud_pair_features
from .geom import NeighborIndex, PointCloud
from .model import MlpParams, opfr_forward
from .pfh import PfhConfig, pfh_all
from .sampling import SamplingConfig

MIN_REPS = 5


@dataclass
class BenchReport:
    pipeline: str
    n_points: int
    reps: int
    times_s: List[float]
    median_s: float
    speedup_vs_baseline: Optional[float] = None
    config: Dict[str, object] = field(default_factory=dict)

    def row(self) -> Dict[str, object]:
        d = asdict(self)
        d["times_s"] = ";".join(f"{t:.6e}" for t in self.times_s)
        d["config"] = ";".join(f"{k}={v}" for k, v in sorted(self.config.items()))
        return d


def time_reps(fn: Callable[[], object], reps: int) -> Tuple[List[float], float]:
    """Run ``fn`` ``reps`` times; the median skips the first (cold) run."""
    if reps < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} repetitions, got {reps}")
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times, float(np.median(times[1:]))


def opfr_pipeline(cloud: PointCloud, cfg: SamplingConfig, params: Optional[MlpParams] = None,
                  workers: int = 1):
    feats = cloud_pair_features(cloud, cfg, index=NeighborIndex(cloud, workers=workers)).features
    if params is not None:
        return opfr_forward(feats, params, "eval")
    return feats


def pfh_pipeline(cloud: PointCloud, cfg: PfhConfig, workers: int = 1):
    return pfh_all(cloud, cfg, index=NeighborIndex(cloud, workers=workers))


def bench_pipelines(cloud: PointCloud, reps: int = 20, cfg: SamplingConfig = SamplingConfig(),
                    pfh_cfg: PfhConfig = PfhConfig(), params: Optional[MlpParams] = None,
                    threads: int = 1, shape: str = "custom") -> Tuple[BenchReport, BenchReport]:
    """Time both pipelines on the same cloud under the same thread budget.

    Returns ``(opfr_report, pfh_report)``; the OPFR report carries the
    PFH/OPFR median ratio.
    """
    if reps < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} repetitions, got {reps}")
    common = {"threads": threads, "shape": shape}
    with threadpool_limits(threads):
        t_o, m_o = time_reps(lambda: opfr_pipeline(cloud, cfg, params, threads), reps)
        t_p, m_p = time_reps(lambda: pfh_pipeline(cloud, pfh_cfg, threads), reps)
    opfr_cfg = dict(common, k1=cfg.k1, k2=cfg.k2, k3=cfg.k3, k3_domain=cfg.k3_domain,
                    mlp="none" if params is None else "x".join(map(str, params.spec.widths)))
    pfh_conf = dict(common, k=pfh_cfg.k, bins=pfh_cfg.bins_per_angle, normals="pca")
    opfr = BenchReport("opfr_raw" if params is None else "opfr_mlp", len(cloud), reps, t_o, m_o,
                       m_p / m_o, opfr_cfg)
    pfh = BenchReport("pfh", len(cloud), reps, t_p, m_p, 1.0, pfh_conf)
    return opfr, pfh


def scaling_slopes(make_cloud: Callable[[int], PointCloud], sizes: Sequence[int] = (256, 512, 1024, 2048),
                   reps: int = 5, threads: int = 1) -> Dict[str, float]:
    """Log-log slope of median time against cloud size for each pipeline."""
    med = {"opfr_raw": [], "pfh": []}
    for n in sizes:
        o, p = bench_pipelines(make_cloud(n), reps, threads=threads)
        med["opfr_raw"].append(o.median_s)
        med["pfh"].append(p.median_s)
    x = np.log(np.asarray(sizes, dtype=float))
    return {k: float(np.polyfit(x, np.log(v), 1)[0]) for k, v in med.items()}


def format_reports(reports: Sequence[BenchReport]) -> str:
    lines = [f"{'pipeline':<10} {'n':>6} {'reps':>5} {'median_ms':>11} {'speedup':>9}  config"]
    for r in reports:
        sp = "-" if r.speedup_vs_baseline is None else f"{r.speedup_vs_baseline:.2f}x"
        cfg = " ".join(f"{k}={v}" for k, v in sorted(r.config.items()))
        lines.append(f"{r.pipeline:<10} {r.n_points:>6} {r.reps:>5} {r.median_s * 1e3:>11.3f} {sp:>9}  {cfg}")
    return "\n".join(lines)
