# Inlet-pressure sweep and the three comparisons.
#
# Runs the two-stage procedure at 50, 100 and 200 Pa, then the simultaneous
# and density-based alternatives at 200 Pa, and re-opens the walls of the
# 200 Pa design.  This is the same battery that ``coolopt verify trends``
# scores; here the numbers are laid out as a table.  Expect about 6 minutes.

from coolopt.verification import PRESSURES, desk_config
from coolopt.workflow import run_reoptimize_walls, run

rows = []
for p_in in PRESSURES:
    res = run(desk_config("two_stage", p_in))
    fins = res.final_components.n_active_fins
    rows.append((f"two-stage {p_in:g} Pa", res.final_J, len(res.final_components.walls), fins))
    if p_in == 200.0:
        two = res

sim = run(desk_config("simultaneous", 200.0))
rows.append(("simultaneous 200 Pa", sim.final_J, len(sim.final_components.walls),
             sim.final_components.n_active_fins))
den = run(desk_config("density_baseline", 200.0))
rows.append(("density 200 Pa", den.final_J, "-", "-"))
re = run_reoptimize_walls(desk_config("reoptimize_walls", 200.0, prior_run="memory"), two.final_components)
rows.append(("walls re-opened 200 Pa", re.final_J, len(re.final_components.walls),
             re.final_components.n_active_fins))

print(f"{'run':<26s}{'J [K]':>10s}{'walls':>8s}{'fins':>8s}")
for name, J, walls, fins in rows:
    print(f"{name:<26s}{J:>10.2f}{walls!s:>8s}{fins!s:>8s}")
print(f"relative J change on re-opening the walls: {re.extra['relative_J_change']:.2%}")
