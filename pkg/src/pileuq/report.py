"""Figure rendering: predictive deflection bands per belief time and the
MAPE-versus-training-size curve, as deterministic SVGs.

Reads previously written artifacts only; anything absent becomes an entry
in the manifest's gap list instead of an error, so partial pipelines still
produce a useful report.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .config import RunConfig  # noqa: E402
from .errors import IoFailure  # noqa: E402

# fixed hash salt keeps SVG internal ids stable across runs
matplotlib.rcParams["svg.hashsalt"] = "pileuq"

_SAVE_OPTS = {"format": "svg", "metadata": {"Date": None}}


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def _case_label(case_dir: Path, out: Path) -> str:
    resolved = (out / case_dir).resolve() if not case_dir.is_absolute() else case_dir
    # the run's own artifacts get a fixed label so figure names do not
    # depend on where the output directory happens to live
    if resolved == out.resolve():
        return "self"
    return resolved.name or "case"


def _plot_band(ax, depths, band, label, color):
    lo = np.asarray(band["lo"], dtype=float)
    hi = np.asarray(band["hi"], dtype=float)
    if lo.shape != depths.shape:
        return False
    ax.fill_betweenx(depths, lo, hi, alpha=0.3, color=color, label=label)
    ax.plot((lo + hi) / 2, depths, color=color, linewidth=0.8)
    return True


def _render_band_figure(config: RunConfig, case_dir: Path, time: int,
                        summary: dict, target: Path) -> None:
    depths = config.pile.depths
    fig, ax = plt.subplots(figsize=(4.0, 5.0))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    if time == 0:
        bands = summary.get("predictive_bands_99", {})
        for i, (name, band) in enumerate(sorted(bands.items())):
            _plot_band(ax, depths, band, name, colors[i % len(colors)])
    else:
        own = summary.get("predictive_band_99")
        if own:
            _plot_band(ax, depths, own, f"stage_{time}", colors[(time - 1) % len(colors)])
        for i, (name, band) in enumerate(
                sorted(summary.get("cross_predictive_bands_99", {}).items())):
            _plot_band(ax, depths, band, name, colors[(time + i) % len(colors)])
        obs_path = case_dir / config.paths.observations.format(stage=time)
        if obs_path.exists():
            try:
                rows = obs_path.read_text().splitlines()[1:]
                for row in rows:
                    vals = np.array([float(v) for v in row.split(",")])
                    if vals.shape == depths.shape:
                        ax.plot(vals, depths, ".", color="black", markersize=2)
            except ValueError:
                pass
    ax.invert_yaxis()
    ax.set_xlabel("deflection [m]")
    ax.set_ylabel("depth [m]")
    ax.set_title(f"99% predictive bands at t{time}")
    ax.legend(loc="lower right", fontsize=7)
    fig.tight_layout()
    fig.savefig(target, **_SAVE_OPTS)
    plt.close(fig)


def _render_mape_curve(sweep_path: Path, target: Path) -> bool:
    try:
        lines = sweep_path.read_text().splitlines()
    except OSError:
        return False
    if not lines or lines[0] != "mode,k,seed,stage,mape_percent":
        return False
    table: dict[tuple[str, int, int], list[float]] = {}
    for line in lines[1:]:
        mode, k, _, stage, value = line.split(",")
        table.setdefault((mode, int(stage), int(k)), []).append(float(value))
    if not table:
        return False
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    series = sorted({(mode, stage) for mode, stage, _ in table})
    for mode, stage in series:
        ks = sorted(k for m, s, k in table if m == mode and s == stage)
        medians = [float(np.median(table[(mode, stage, k)])) for k in ks]
        ax.plot(ks, medians, marker="o", markersize=3,
                label=f"{mode} stage {stage}")
    ax.set_xlabel("training ensemble size K")
    ax.set_ylabel("median MAPE [%]")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(target, **_SAVE_OPTS)
    plt.close(fig)
    return True


def render_report(config: RunConfig, out: Path) -> dict:
    report_dir = out / config.paths.report_dir
    try:
        report_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create report directory: {exc}") from exc
    figures: list[str] = []
    gaps: list[str] = []
    for case in config.report.cases:
        case_dir = (out / case).resolve()
        label = _case_label(Path(case), out)
        for time in range(len(config.stages) + 1):
            summary_path = case_dir / config.paths.summary.format(time=time)
            summary = _load_json(summary_path)
            if summary is None:
                gaps.append(f"{label}: missing {summary_path.name}")
                continue
            name = f"bands_{label}_t{time}.svg"
            _render_band_figure(config, case_dir, time, summary,
                                report_dir / name)
            figures.append(f"{config.paths.report_dir}/{name}")
    if _render_mape_curve(out / config.paths.mape_sweep,
                          report_dir / "mape_vs_k.svg"):
        figures.append(f"{config.paths.report_dir}/mape_vs_k.svg")
    else:
        gaps.append(f"missing or empty {config.paths.mape_sweep}")
    manifest = {"figures": figures, "gaps": gaps}
    try:
        (out / config.paths.report_manifest).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report manifest: {exc}") from exc
    return manifest
