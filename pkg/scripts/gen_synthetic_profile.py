"""Regenerate src/gdnn/profiles/synthetic_xu3.csv.

The latency model is latency(core, f, k) = (k/4) * (a + b/f_ghz), with
(a, b) fitted exactly through the two published full-width anchor points
per core (200 MHz and max frequency). The power model is an invented cubic
in frequency with an idle floor; both are illustrative, not measurements.
Accuracies are placeholders shaped like a typical width/accuracy curve,
with the full-width value matching the published anchor.
"""

from pathlib import Path

CORES = {
    # core: (freq levels in MHz, (f_lo_ghz, lat_lo_ms), (f_hi_ghz, lat_hi_ms),
    #        (idle_mw, cubic_mw_per_ghz3))
    "a15": (range(200, 1801, 100), (0.2, 1020.0), (1.8, 117.0), (150.0, 500.0)),
    "a7": (range(200, 1301, 100), (0.2, 1780.0), (1.3, 280.0), (50.0, 120.0)),
}
ACCURACY = {1: 0.56, 2: 0.641, 3: 0.685, 4: 0.712}


def fit(lo, hi):
    (f1, l1), (f2, l2) = lo, hi
    b = (l1 - l2) / (1.0 / f1 - 1.0 / f2)
    a = l1 - b / f1
    return a, b


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "gdnn" / "profiles" / "synthetic_xu3.csv"
    lines = ["platform,core,freq_hz,config_pct,latency_ms,power_mw,accuracy"]
    for core, (freqs, lo, hi, (idle, cubic)) in CORES.items():
        a, b = fit(lo, hi)
        anchors = {round(f * 1000): l for f, l in (lo, hi)}
        for mhz in freqs:
            f = mhz / 1000.0
            power = idle + cubic * f ** 3
            for k in (1, 2, 3, 4):
                # snap the fitted curve to the published anchor latencies
                full = anchors.get(mhz, a + b / f)
                lat = (k / 4.0) * full
                lines.append(f"xu3,{core},{mhz * 1_000_000},{k * 25},"
                             f"{lat!r},{power!r},{ACCURACY[k]!r}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(lines) - 1} points)")


if __name__ == "__main__":
    main()
