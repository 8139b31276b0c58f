"""
Fault-injection scan budget
===========================

An exhaustive spatial scan visits every grid position. Restricting it to the
area a rail actually occupies divides the time by the affected fraction.
"""

from railscope.analysis import ScanPlan, masked_speedup, plan_report, scan_time

# %%
# 8 mm x 12 mm at 1 um steps, one 100 ms attempt per position.
plan = scan_time(ScanPlan(8000.0, 12000.0, 1.0, 1.0, 1, 0.1, 1))
print(plan_report(plan)["summary"])

# %%
# Restricting the campaign to the area found by imaging.
for label, fraction in (("core rail, thermal", 0.189), ("core rail logic only", 0.109), ("usb rail", 0.012)):
    p = scan_time(plan, fraction)
    print("%-22s %6.2f days  (%.0fx faster)" % (label, p.t_masked_days, masked_speedup(p, fraction)))

# %%
# Coarser steps trade spatial resolution for time.
for step in (1.0, 2.0, 5.0, 10.0):
    p = scan_time(ScanPlan(8000.0, 12000.0, step, step))
    print("step %4.1f um: %12d positions, %8.2f days" % (step, p.positions, p.t_scan_days))
