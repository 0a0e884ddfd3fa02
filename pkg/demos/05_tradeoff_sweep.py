"""
Trade-off curves from a config file
===================================

Sweeps the eps grid for every family in configs/concave_quadratic.ini, writes the CSV
and SVG next to this script, and fits the scaling exponent.
"""

from pathlib import Path

from qtradeoff.experiments import emit_csv, emit_svg, fit_scaling, interpolate_at_queue, load_config, sweep

root = Path(__file__).resolve().parent
cfg = load_config(root.parent / "configs" / "concave_quadratic.ini")
points = sweep(cfg)

out = root / "out"
out.mkdir(exist_ok=True)
emit_csv(points, out / cfg.csv_name)
emit_svg(points, out / cfg.svg_name, cfg.log_y, cfg.title)

for spec in cfg.families:
    ratio = interpolate_at_queue(points, spec.label, 15.0)
    fit = fit_scaling(points, "powerlaw", spec.label)
    print(f"{spec.label:14s} regret ratio at E[q] = 15: {100 * ratio:.3f}%   "
          f"exponent {fit.slope:.3f} (R^2 {fit.r_squared:.4f})")
