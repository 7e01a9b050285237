#!/usr/bin/env python3
"""Regenerates the synthetic catalogs under tests/fixtures/.

Each catalog has ten products with descriptions assembled from a
category phrase pool and 48x48 PPM images: a coloured shape on a plain
background.
"""
import argparse
import json
from pathlib import Path

import numpy as np

CATEGORIES = {
    "s1": {
        "category": "Backpack",
        "query": "I am looking for a durable waterproof backpack for travel.",
        "brands": ["Trailon", "Packwise", "Nordhike", "Urbanix", "Voyago",
                   "Stridex", "Cliffo", "Metrobag", "Ambler", "Quenta"],
        "kinds": ["Backpack", "Daypack", "Rucksack", "Travel Pack", "Laptop Backpack"],
        "phrases": [
            "Padded laptop sleeve fits most 15 inch notebooks.",
            "Water resistant nylon shell keeps gear dry in light rain.",
            "Ergonomic shoulder straps with breathable mesh back panel.",
            "Side pockets hold a water bottle or compact umbrella.",
            "Anti theft zipper pocket on the back for passports and cards.",
            "External USB charging port for phones on the go.",
            "Roomy main compartment with 30 liter capacity.",
            "Reinforced stitching and sturdy base for daily commute.",
            "Lightweight frame ideal for hiking and weekend trips.",
            "Includes a detachable rain cover and reflective strips.",
            "Canvas exterior with leather trim for a classic look.",
            "Fits under airline seats as a personal item.",
            "Multiple organizer pockets for pens, keys and chargers.",
            "Luggage strap slides over rolling suitcase handles.",
            "Available in five colors for school and office.",
            "Chest strap and hip belt spread the load evenly.",
        ],
    },
    "s2": {
        "category": "Coffee Maker",
        "query": "I want a fast coffee maker that brews hot strong coffee.",
        "brands": ["Brewmont", "Cafeto", "Mornex", "Roastly", "Percola",
                   "Javalux", "Kettora", "Dripwell", "Aromis", "Bruno"],
        "kinds": ["Coffee Maker", "Drip Brewer", "Espresso Machine", "Pour Over Set", "Coffee Machine"],
        "phrases": [
            "Brews a full 12 cup glass carafe in under ten minutes.",
            "Programmable timer starts brewing before you wake up.",
            "Thermal stainless steel carafe keeps coffee hot for hours.",
            "Bold setting extracts a stronger richer flavor.",
            "Reusable mesh filter reduces paper waste.",
            "Removable water tank is easy to fill and clean.",
            "Warming plate with automatic shutoff after two hours.",
            "Single serve mode works with pods or ground coffee.",
            "Built in burr grinder for fresh beans every morning.",
            "Fifteen bar pump pressure for cafe style espresso.",
            "Steam wand froths milk for lattes and cappuccinos.",
            "Compact footprint fits small kitchens and dorms.",
            "Quiet operation and a simple one touch control panel.",
            "Descale reminder light keeps the machine running well.",
            "Pause and serve lets you pour a cup mid brew.",
            "Dishwasher safe parts make cleanup quick.",
        ],
    },
    "s3": {
        "category": "Desk Lamp",
        "query": "Looking for a bright adjustable desk lamp for reading.",
        "brands": ["Luminor", "Brightly", "Glowen", "Deskara", "Halox",
                   "Photona", "Lumetto", "Radia", "Beamly", "Candela"],
        "kinds": ["Desk Lamp", "LED Lamp", "Reading Light", "Task Lamp", "Clamp Lamp"],
        "phrases": [
            "Dimmable LED panel with five brightness levels.",
            "Adjustable swing arm and rotating head aim light anywhere.",
            "Touch control switches between warm and cool color temperature.",
            "Flicker free light reduces eye strain during long study sessions.",
            "USB charging port powers your phone while you work.",
            "Sturdy metal base keeps the lamp stable on any desk.",
            "Clamp mount saves space on small tables and shelves.",
            "Flexible gooseneck bends to the perfect reading angle.",
            "Memory function remembers your last setting.",
            "Auto off timer saves energy after one hour.",
            "Delivers 800 lumens with wide even coverage.",
            "Anti glare diffuser softens harsh shadows.",
            "Slim modern design suits office and bedside use.",
            "Energy saving bulbs rated for 50000 hours.",
            "Night light mode for late hours.",
            "Foldable body packs flat for travel.",
        ],
    },
}

SIZE = 48


def make_image(rng):
    bg = rng.uniform(0.8, 0.95, size=3)
    img = np.empty((SIZE, SIZE, 3))
    img[:] = bg
    img += rng.normal(0.0, 0.01, size=img.shape)
    fg = rng.uniform(0.05, 0.7, size=3)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    cy, cx = rng.uniform(18, 30, size=2)
    ry, rx = rng.uniform(8, 15, size=2)
    if rng.random() < 0.5:
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    else:
        inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    shade = 1.0 - 0.3 * (yy - cy + ry) / (2 * ry)
    img[inside] = (fg[None, :] * shade[inside][:, None])
    accent = rng.uniform(0.0, 1.0, size=3)
    band = inside & (np.abs(yy - cy) < 2)
    img[band] = accent
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)


def write_ppm(path, img):
    h, w, _ = img.shape
    path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def make_description(rng, spec):
    picks = rng.choice(len(spec["phrases"]), size=rng.integers(3, 6), replace=False)
    return " ".join(spec["phrases"][i] for i in picks)


def build(name, spec, out_dir, seed):
    rng = np.random.default_rng(seed)
    cat_dir = out_dir / name
    (cat_dir / "images").mkdir(parents=True, exist_ok=True)
    products = []
    for i, brand in enumerate(spec["brands"]):
        pid = f"{name}-{i + 1:02d}"
        kind = spec["kinds"][i % len(spec["kinds"])]
        image_path = f"images/{pid}.ppm"
        write_ppm(cat_dir / image_path, make_image(rng))
        products.append({
            "id": pid,
            "name": f"{brand} {kind}",
            "description": make_description(rng, spec),
            "image_path": image_path,
        })
    catalog = {"category": spec["category"], "query": spec["query"], "products": products}
    (cat_dir / "catalog.json").write_text(json.dumps(catalog, indent=2) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "tests" / "fixtures")
    parser.add_argument("--seed", type=int, default=2025)
    args = parser.parse_args()
    for offset, (name, spec) in enumerate(CATEGORIES.items()):
        build(name, spec, args.out, args.seed + offset)


if __name__ == "__main__":
    main()
