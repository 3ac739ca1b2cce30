"""Regenerate the synthetic building profiles bundled with the package.

The shapes are loosely modelled on typical US commercial/residential load
curves: a residential profile with morning and evening peaks, and office
and school profiles with daytime plateaus. Annual profiles modulate the
daily shape with a winter-peaking seasonal factor, a weekend dip for the
non-residential buildings and a little multiplicative noise.

    python tools/generate_profiles.py
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "qdsom" / "data" / "profiles"


def bump(hours, center, width, height):
    d = np.minimum(np.abs(hours - center), 24 - np.abs(hours - center))
    return height * np.exp(-0.5 * (d / width) ** 2)


def daily_shapes():
    h = np.arange(24, dtype=float)
    household = 350 + bump(h, 7.5, 1.2, 900) + bump(h, 19.5, 2.0, 1900)
    office = 1800 + np.where((h >= 8) & (h <= 18), 7500, 0) + bump(h, 13, 3, 1200)
    school = 5000 + np.where((h >= 8) & (h <= 16), 24000, 0) + bump(h, 11, 2, 6000)
    return {"household": household, "office": office, "school": school}


def annual(daily, name, rng):
    days = np.arange(365)
    season = 1.0 + 0.25 * np.cos(2 * np.pi * (days - 15) / 365)
    base = daily.min()
    out = []
    for d in days:
        day = daily.copy()
        weekend = d % 7 in (5, 6)
        if name != "household" and weekend:
            day = base + 0.3 * (day - base)
        if name == "school" and 180 <= d < 240:
            day = base + 0.2 * (day - base)
        out.append(day * season[d])
    needs = np.concatenate(out) * rng.lognormal(0.0, 0.08, 365 * 24)
    return needs


def write(path, needs):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["hour_index,need_wh"] + [f"{i},{v:.1f}" for i, v in enumerate(needs)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    rng = np.random.default_rng(2022)
    for name, daily in daily_shapes().items():
        write(OUT / "daily" / f"{name}.csv", daily)
        write(OUT / "annual" / f"{name}.csv", annual(daily, name, rng))


if __name__ == "__main__":
    main()
