"""Generated matplotlib scripts for sweep bundles.

The package itself never imports matplotlib; it writes small scripts that
read the bundle CSVs and render the figure when run.
"""

from __future__ import annotations

_PREAMBLE = '''"""Plot for the {title} bundle in this directory. Requires matplotlib."""
import csv
import glob
import os

import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name)) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    return {{h: [float(r[i]) if r[i] not in ("", "true", "false") else r[i] for r in body]
             for i, h in enumerate(header)}}


'''

_SPECTRA = '''
fig, ax = plt.subplots(figsize=(6, 4))
summary = read("summary.csv")
label = list(summary)[0]
for value, path in zip(summary[label], sorted(glob.glob(os.path.join(HERE, "spectra", "*.csv")))):
    data = read(os.path.relpath(path, HERE))
    f0 = {offset}
    ax.plot([(f - f0) / {scale} for f in data["frequency_hz"]], data["magnitude_db"], lw=1,
            label=f"{{value:g}}")
ax.set_xlabel("{xlabel}")
ax.set_ylabel("|r| (dB)")
ax.legend(title=label, fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{name}.png"), dpi=150)
'''

_WTD = '''
fig, ax = plt.subplots(figsize=(6, 4))
for path in sorted(glob.glob(os.path.join(HERE, "wtd", "*.csv"))):
    data = read(os.path.relpath(path, HERE))
    f0 = data["frequency_hz"][len(data["frequency_hz"]) // 2]
    ax.plot([(f - f0) / 1e3 for f in data["frequency_hz"]],
            [t * 1e3 if t != "" else float("nan") for t in data["re_tau_s"]], lw=1)
ax.set_xlabel("probe offset (kHz)")
ax.set_ylabel("Re tau (ms)")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{name}.png"), dpi=150)
'''

_MAP = '''
data = read("map.csv")
traces = read("traces.csv")
powers = sorted(set(data["power_dbm"]))
fig, (ax, inset) = plt.subplots(1, 2, figsize=(10, 4))
center = {center}
sc = ax.scatter([(f - center) / 1e3 for f in data["frequency_hz"]], data["power_dbm"],
                c=data["magnitude_db"], s=2, cmap="viridis")
ax.plot([(f - center) / 1e3 for f in traces["lower_dip_hz"]], traces["power_dbm"], "r.", ms=3)
ax.plot([(f - center) / 1e3 for f in traces["upper_dip_hz"]], traces["power_dbm"], "r.", ms=3)
ax.set_xlabel("probe - (omega_d + omega_b) / 2 pi (kHz)")
ax.set_ylabel("drive power (dBm)")
fig.colorbar(sc, ax=ax, label="|r| (dB)")
inset.semilogy([(f - center) / 1e3 for f in traces["polariton_frequency_hz"]], traces["cooperativity"], "k.-")
inset.set_xlabel("upper polariton - sideband (kHz)")
inset.set_ylabel("cooperativity")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{name}.png"), dpi=150)
'''


MIDPOINT = 'data["frequency_hz"][len(data["frequency_hz"]) // 2]'


def plot_script(name: str, kind: str, *, offset_hz: float | None = None, scale_hz: float = 1e6,
                xlabel: str = "probe offset (MHz)", wtd: bool = False) -> str:
    """Source text of a plotting script for a bundle of sweep ``kind``.

    Probe frequencies are plotted relative to ``offset_hz``, or to each
    spectrum's grid midpoint when it is None.
    """
    head = _PREAMBLE.format(title=name)
    if kind == "anticrossing":
        return head + _MAP.format(center=repr(offset_hz or 0.0), name=name)
    if wtd:
        return head + _WTD.format(name=name)
    offset = MIDPOINT if offset_hz is None else repr(offset_hz)
    return head + _SPECTRA.format(offset=offset, scale=repr(scale_hz), xlabel=xlabel, name=name)
