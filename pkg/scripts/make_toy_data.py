#!/usr/bin/env python3
"""Generate the synthetic demo CSVs for the shipped example configs.

Three datasets are produced, all random draws with planted dependencies:

* ``toy/toy.csv`` — three categorical columns: x uniform over five labels,
  y equal to x except for 10% label noise, z a deterministic binary function
  of y. Small enough to train in minutes on a laptop CPU.
* ``household_travel/`` — a person-level survey mirror (8 columns): a
  ground-truth population of ``--population`` rows is drawn with
  borough-dependent demographics, then split into a detailed survey sample
  (the feeder), a large low-detail extract of the three common columns (the
  distributor), and census-style control totals aggregated over the full
  population. ``bias_rules.json`` removes 95% of two of the three age bands
  per borough (seeded band choice), for the bias-correction demo.
* ``mode_choice/trips.csv`` — an 18-column trip-level mirror with a few
  planted causal links, enough to exercise the larger example graph.

Usage: python scripts/make_toy_data.py [--out-dir sample_configs] [--seed 0]
"""

from __future__ import annotations

import argparse
import csv
import json
from pathlib import Path

import numpy as np

BOROUGHS = (
    "Barnet", "Brent", "Bromley", "Camden", "Enfield",
    "Greenwich", "Havering", "Hillingdon", "Kingston", "Westminster",
)
ETHNICITIES = ("White", "Asian", "Black", "Mixed", "Other")
COMPS = ("single", "couple", "family", "other")
INCOMES = tuple(f"inc{i:02d}" for i in range(1, 11))


def write_csv(path: Path, header, columns) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow(row)


def make_toy(out: Path, n: int, rng: np.random.Generator) -> None:
    x = rng.integers(0, 5, n)
    y = x.copy()
    flip = rng.random(n) < 0.1
    y[flip] = (y[flip] + rng.integers(1, 5, n)[flip]) % 5
    z = np.where(y < 3, "b1", "b0")
    cats = np.array([f"c{i}" for i in range(5)])
    write_csv(out / "toy" / "toy.csv", ["x", "y", "z"], [cats[x], cats[y], z])
    print(f"wrote {out / 'toy' / 'toy.csv'} ({n} rows)")


def draw_population(n: int, rng: np.random.Generator) -> dict:
    borough = rng.integers(0, 10, n)
    # Each borough gets its own demographic tilt.
    age_mean = 30 + 2.5 * borough
    age = np.clip(rng.normal(age_mean, 18), 1, 100)
    gender = np.where(rng.random(n) < 0.51, "Female", "Male")
    eth_probs = np.stack(
        [np.roll(np.array([0.55, 0.2, 0.12, 0.08, 0.05]), b % 3) for b in range(10)]
    )
    ethnicity = np.array(
        [rng.choice(5, p=eth_probs[b]) for b in borough]
    )
    comp = np.select(
        [age < 30, age < 45, age < 70],
        [rng.integers(0, 2, n), 2 * np.ones(n, dtype=int), rng.integers(1, 4, n)],
        default=3,
    )
    people = np.clip(
        np.where(comp == 2, rng.poisson(3.2, n), rng.poisson(1.2, n)) + 1, 1, 11
    )
    income = np.clip(
        rng.integers(0, 4, n) + (borough % 5) + (comp == 2), 0, 9
    )
    carvan = np.clip(
        rng.poisson(0.4 + 0.15 * income + 0.2 * (people > 2) - 0.3 * (borough == 3), n), 0, 7
    )
    return {
        "hh_income": np.array(INCOMES)[income],
        "hh_people": people.astype(str),
        "hh_borough": np.array(BOROUGHS)[borough],
        "hh_carvan": carvan.astype(str),
        "hh_comp": np.array(COMPS)[comp],
        "age": np.round(age, 1),
        "gender": gender,
        "ethnicity": np.array(ETHNICITIES)[ethnicity],
    }


def aggregate_shares(values, strata, weights, categories) -> dict:
    out = {}
    for stratum in sorted(set(strata)):
        mask = strata == stratum
        w = weights[mask]
        v = values[mask]
        counts = {c: float(w[v == c].sum()) for c in categories}
        total = sum(counts.values())
        out[stratum] = {c: counts[c] / total for c in categories}
    return out


def make_household_travel(
    out: Path, survey_rows: int, distributor_rows: int, population: int,
    rng: np.random.Generator,
) -> None:
    pop = draw_population(population, rng)
    header = list(pop.keys())
    base = out / "household_travel"

    survey_idx = rng.choice(population, size=survey_rows, replace=False)
    write_csv(base / "survey.csv", header, [pop[c][survey_idx] for c in header])

    dist_idx = rng.choice(population, size=distributor_rows, replace=False)
    dist_cols = ["age", "gender", "hh_borough"]
    write_csv(base / "distributor.csv", dist_cols, [pop[c][dist_idx] for c in dist_cols])

    sizes = pop["hh_people"].astype(float)
    inv_size = 1.0 / sizes
    unit = np.ones(population)
    controls = {
        "stratum_var": "hh_borough",
        "controls": [
            {
                "variable": name,
                "household_weighted": weighted,
                **({"size_var": "hh_people"} if weighted else {}),
                "strata": aggregate_shares(
                    pop[name], pop["hh_borough"], inv_size if weighted else unit, cats
                ),
            }
            for name, weighted, cats in (
                ("hh_comp", True, COMPS),
                ("hh_people", True, tuple(str(i) for i in range(1, 12))),
                ("hh_carvan", True, tuple(str(i) for i in range(8))),
                ("ethnicity", False, ETHNICITIES),
            )
        ],
    }
    with open(base / "control_totals.json", "w", encoding="utf-8") as fh:
        json.dump(controls, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # Age bias: per borough, keep one seeded age band and drop 95% of the
    # other two (bands: under 25, 25-55, over 55).
    bands = [("lt", 25), ("ge", 25), ("gt", 55)]
    rules = []
    for borough in BOROUGHS:
        keep = int(rng.integers(0, 3))
        for band in range(3):
            if band == keep:
                continue
            if band == 0:
                main = {"variable": "age", "op": "lt", "value": 25}
            elif band == 1:
                main = {"variable": "age", "op": "ge", "value": 25}
            else:
                main = {"variable": "age", "op": "gt", "value": 55}
            where = [{"variable": "hh_borough", "op": "eq", "value": borough}]
            if band == 1:
                where.append({"variable": "age", "op": "le", "value": 55})
            rules.append({**main, "rate": 0.95, "where": where})
    with open(base / "bias_rules.json", "w", encoding="utf-8") as fh:
        json.dump(rules, fh, indent=2)
        fh.write("\n")
    print(f"wrote household_travel demo ({survey_rows} survey, {distributor_rows} distributor)")


def make_mode_choice(out: Path, n: int, rng: np.random.Generator) -> None:
    age = np.clip(rng.normal(40, 18, n), 5, 100)
    female = rng.integers(0, 2, n)
    region = rng.integers(0, 5, n)
    income = np.clip(rng.integers(0, 6, n) + (region == 0), 0, 9)
    people = np.clip(rng.poisson(1.6, n) + 1, 1, 11)
    vehicles = np.clip(rng.poisson(0.3 + 0.12 * income - 0.4 * (region == 0), n), 0, 8)
    license_ = ((age >= 17) & (rng.random(n) < 0.55 + 0.3 * (vehicles > 0))).astype(int)
    fare = np.select(
        [age < 16, age < 18, age >= 65], [2, 1, 4], default=0
    )
    fare = np.where((fare == 0) & (rng.random(n) < 0.05), 3, fare)
    day = rng.integers(0, 7, n)
    purpose = np.select(
        [(age > 22) & (age < 65) & (rng.random(n) < 0.6), age <= 22],
        [0, 1],
        default=rng.integers(2, 5, n),
    )
    distance = np.round(np.clip(rng.lognormal(1.2 + 0.1 * (purpose == 0), 0.8, n), 0.1, 95), 3)
    start = np.round(np.clip(rng.normal(np.where(purpose == 0, 8.5, 13.0), 2.5), 0, 23.99), 2)
    traffic = np.round(np.clip(0.1 + 0.02 * distance + 0.12 * (day < 5) * np.exp(-0.5 * ((start - 8.5) / 1.5) ** 2) + rng.normal(0, 0.03, n), 0, 1), 4)
    dur_w = np.round(distance / 4.8 + rng.normal(0, 0.05, n).clip(-0.04), 3)
    dur_c = np.round(distance / 14 + rng.normal(0, 0.03, n).clip(-0.02), 3)
    dur_pt = np.round(distance / 18 + 0.3 + rng.normal(0, 0.05, n).clip(-0.04), 3)
    dur_d = np.round(distance / 30 * (1 + traffic) + rng.normal(0, 0.02, n).clip(-0.015), 3)
    mode_score = np.stack(
        [
            -dur_w * 3,
            -dur_c * 2.5 - 0.5,
            -dur_pt * 2 - 0.3,
            -dur_d * 2 - 1.5 + 2.0 * (vehicles > 0) * license_,
        ]
    )
    mode = np.argmax(mode_score + rng.gumbel(0, 0.4, (4, n)), axis=0)

    base = out / "mode_choice"
    cols = {
        "hh_income": np.array(INCOMES)[income],
        "hh_people": people.astype(str),
        "hh_region": np.array(
            ["Central London", "East London", "North London", "South London", "West London"]
        )[region],
        "hh_vehicles": vehicles.astype(str),
        "age": np.round(age, 1),
        "female": female.astype(str),
        "driving_license": license_.astype(str),
        "fare_type": np.array(["full", "16+", "child", "disabled", "free"])[fare],
        "dur_walking": dur_w,
        "dur_cycling": dur_c,
        "dur_pt": dur_pt,
        "dur_driving": dur_d,
        "traffic_percent": traffic,
        "start_time": start,
        "day_of_week": np.array(["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"])[day],
        "distance": distance,
        "purpose": np.array(["work", "education", "shopping", "leisure", "other"])[purpose],
        "travel_mode": np.array(["walk", "cycle", "pt", "drive"])[mode],
    }
    write_csv(base / "trips.csv", list(cols.keys()), list(cols.values()))
    print(f"wrote {base / 'trips.csv'} ({n} rows)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, default=Path(__file__).parent.parent / "sample_configs")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--toy-rows", type=int, default=2000)
    parser.add_argument("--survey-rows", type=int, default=3000)
    parser.add_argument("--distributor-rows", type=int, default=20000)
    parser.add_argument("--population", type=int, default=50000)
    parser.add_argument("--trip-rows", type=int, default=3000)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    make_toy(args.out_dir, args.toy_rows, rng)
    make_household_travel(
        args.out_dir, args.survey_rows, args.distributor_rows, args.population, rng
    )
    make_mode_choice(args.out_dir, args.trip_rows, rng)


if __name__ == "__main__":
    main()
