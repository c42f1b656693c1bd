"""Automated channel switching through a simulated enterprise network.

A robot loops down a corridor past four APs on different 80 MHz channels.
The scanner periodically sweeps all channels, locks onto the strongest
AP, and only switches when another beats the current one by a hysteresis
margin, so equal-strength neighbors never cause flapping.

Run:  python3 demos/05_channel_scanner.py
"""

import numpy as np

from csisense import ApSpec, ChannelSpec, SimScenario
from csisense.scanner import ScanPolicy, run_walkthrough
from csisense.scenario import loop_trajectory

channels = [ChannelSpec(c, 80) for c in (42, 58, 106, 122)]
aps = [
    ApSpec(location=np.array([15.0 + 22.5 * k, 2.0]), chanspec=channels[k],
           tx_power_dbm=-30.0, mac=bytes([0x02, 0, 0, 0, 0x10, k]))
    for k in range(4)
]
print("access points:")
for ap in aps:
    print(f"  channel {ap.chanspec.channel_number:>3} at x = {ap.location[0]:.1f} m")

scenario = SimScenario(
    tx_location=np.array([0.0, 0.0]),
    chanspec=channels[0],
    trajectory=loop_trajectory(0.0, 0.0, length_m=90.0, width_m=4.0, laps=2, n=4800),
    aps=aps,
    snr_db=None,
    seed=1,
)

policy = ScanPolicy()  # 30 s scan period, 6 dB margin, 400 ms switch cost
result = run_walkthrough(scenario, policy)

print(f"\ntwo loops, {len(result.log)} steps at 1 Hz:")
print(f"  tuned to the nearest AP {result.fraction_tuned_to_nearest:.1%} of the time")
print(f"  {result.switch_count} channel switches, {result.scan_count} full scans")
print(f"  total sensing downtime {result.downtime_ns / 1e9:.1f} s "
      f"({policy.switch_cost_ms} ms per switch, "
      f"{policy.dwell_ms} ms per channel per scan)")

# Where did the switches happen?
switches = [e for e in result.log if "switch" in e.action]
print("\nswitch events (time, position, new channel):")
for e in switches[:12]:
    print(f"  t={e.time_s:7.1f} s  x={e.pose.x:5.1f} m  -> channel "
          f"{e.tuned.channel_number}")
