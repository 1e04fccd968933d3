#!/usr/bin/env python3
"""Regenerates the fixture datasets under fixtures/.

Output is deterministic (fixed seeds); rerunning overwrites files in place.
The chart specs in fixtures/corpus/*.json are written by hand.
"""
import csv
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"
CORPUS_DATA = ROOT / "corpus" / "data"
DATASETS = ROOT / "datasets"


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def months(start_year, years):
    return [f"{y}-{m:02d}-01" for y in range(start_year, start_year + years) for m in range(1, 13)]


def r2(x):
    return round(x, 2)


def corpus_sources():
    rng = random.Random(1)
    regions = ["North", "South", "East", "West", "Central"]
    write_csv(
        CORPUS_DATA / "sales.csv",
        ["region", "quarter", "revenue"],
        [[r, f"Q{q}", r2(rng.uniform(40, 160))] for r in regions for q in range(1, 5) for _ in range(5)],
    )

    rng = random.Random(2)
    rows = []
    base = {"Adelie": 3700, "Chinstrap": 3730, "Gentoo": 5080}
    islands = {"Adelie": ["Biscoe", "Dream", "Torgersen"], "Chinstrap": ["Dream"], "Gentoo": ["Biscoe"]}
    for sp, mass in base.items():
        for _ in range(60):
            rows.append([sp, rng.choice(islands[sp]), round(rng.gauss(mass, 350)), r2(rng.gauss(200, 12))])
    write_csv(CORPUS_DATA / "penguins.csv", ["species", "island", "body_mass", "flipper_length"], rows)

    rng = random.Random(3)
    questions = ["Pricing", "Support", "Reliability", "Design", "Speed", "Docs", "Onboarding", "Security"]
    rows = []
    for q in questions:
        agree = rng.randint(10, 80)
        rows.append([q, agree, rng.randint(5, 100 - agree)])
    write_csv(CORPUS_DATA / "survey.csv", ["question", "agree", "disagree"], rows)

    rng = random.Random(4)
    days = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
    rows = []
    for d in days:
        for h in range(24):
            peak = 300 * math.exp(-((h - 8) ** 2) / 8) + 250 * math.exp(-((h - 17) ** 2) / 8)
            weekend = 0.6 if d in ("Sat", "Sun") else 1.0
            for _ in range(2):
                rows.append([d, h, round(30 + peak * weekend + rng.uniform(0, 20))])
    write_csv(CORPUS_DATA / "traffic.csv", ["weekday", "hour", "volume"], rows)

    rng = random.Random(5)
    sources = ["coal", "gas", "solar", "wind"]
    rows = []
    for i, date in enumerate(months(2015, 5)):
        for s, lvl in zip(sources, [300 - i, 250, 20 + 2 * i, 60 + i]):
            rows.append([date, s, r2(max(lvl, 1) * rng.uniform(0.9, 1.1))])
    write_csv(CORPUS_DATA / "energy.csv", ["date", "source", "output"], rows)

    rng = random.Random(6)
    rows = []
    for date in months(2010, 3):
        m = int(date[5:7])
        mean = 12 - 10 * math.cos((m - 1) / 12 * 2 * math.pi)
        for day in (5, 15, 25):
            rows.append([f"{date[:8]}{day:02d}", r2(mean + rng.uniform(-4, 4))])
    write_csv(CORPUS_DATA / "weather.csv", ["date", "temp"], rows)

    rng = random.Random(7)
    rows = []
    for origin, (hp0, mpg0) in {"USA": (140, 20), "Europe": (90, 27), "Japan": (85, 30)}.items():
        for _ in range(70):
            hp = max(45, round(rng.gauss(hp0, 30)))
            rows.append([hp, r2(max(9, mpg0 - (hp - hp0) * 0.12 + rng.gauss(0, 3))), origin])
    write_csv(CORPUS_DATA / "cars.csv", ["horsepower", "mpg", "origin"], rows)

    rng = random.Random(8)
    rows = []
    for sym, p0 in {"AAPL": 30, "MSFT": 25, "IBM": 90}.items():
        p = p0
        for date in months(2004, 4):
            p = max(5, p * rng.uniform(0.93, 1.09))
            rows.append([date, sym, r2(p)])
    write_csv(CORPUS_DATA / "prices.csv", ["date", "symbol", "price"], rows)


def target_datasets():
    rng = random.Random(11)
    rows = []
    for sym, p0 in {"AAPL": 8, "AMZN": 60, "GOOG": 100, "IBM": 80, "MSFT": 40}.items():
        p = p0
        for date in months(2000, 10):
            p = max(2, p * rng.uniform(0.92, 1.09))
            rows.append([date, sym, r2(p)])
    write_csv(DATASETS / "stocks.csv", ["date", "symbol", "price"], rows)

    rng = random.Random(12)
    divisions = [
        "New England", "Middle Atlantic", "East North Central", "West North Central",
        "South Atlantic", "East South Central", "West South Central", "Mountain", "Pacific",
    ]
    rows = []
    for d in divisions:
        lvl = rng.uniform(3.5, 6)
        for i, date in enumerate(months(2000, 10)):
            recession = 4 * max(0, math.sin((i - 96) / 24 * math.pi)) if i > 96 else 0
            rows.append([date, d, r2(max(1.5, lvl + recession + rng.uniform(-0.4, 0.4)))])
    write_csv(DATASETS / "unemployment.csv", ["date", "division", "unemployment"], rows)

    rng = random.Random(13)
    rows = []
    for sp, (sl, sw, pl, pw) in {
        "setosa": (5.0, 3.4, 1.5, 0.25),
        "versicolor": (5.9, 2.8, 4.3, 1.3),
        "virginica": (6.6, 3.0, 5.6, 2.0),
    }.items():
        for _ in range(50):
            rows.append([r2(rng.gauss(sl, 0.35)), r2(rng.gauss(sw, 0.3)), r2(rng.gauss(pl, 0.4)),
                         r2(abs(rng.gauss(pw, 0.2))), sp])
    write_csv(DATASETS / "organisms.csv", ["sepal_length", "sepal_width", "petal_length", "petal_width", "species"], rows)

    rng = random.Random(14)
    genres = ["Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi", "Thriller", "Animation"]
    words = ["Night", "River", "Storm", "Garden", "Echo", "Iron", "Summer", "Ghost", "City", "Dream"]
    movies = []
    for i in range(240):
        movies.append({
            "title": f"{rng.choice(words)} {rng.choice(words)} {i + 1}",
            "genre": sorted(rng.sample(genres, rng.randint(1, 3))),
            "rating": r2(rng.uniform(2.5, 9.5)),
            "gross": round(rng.lognormvariate(17, 1.1)),
            "release_year": rng.randint(1980, 2015),
        })
    DATASETS.mkdir(parents=True, exist_ok=True)
    (DATASETS / "movies.json").write_text(json.dumps(movies, indent=1) + "\n")


if __name__ == "__main__":
    corpus_sources()
    target_datasets()
