"""Regenerates the synthetic imagery and scene fixtures.

    python3 fixtures/generate.py

Panoramas are procedural street-like scenes (sky, facades, road) so that
rendered views are easy to eyeball. Output is deterministic.
"""

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent
R = 6_371_008.8
CAMERA = (40.0100, -105.2700)

NODES = [
    # id, lat, lon, compass (None = not recorded), pano, captured_at_ms, seed
    ("pano-a", 40.01000, -105.27000, 0.0, True, 1717243200000, 1),
    ("pano-b", 40.01030, -105.26950, 37.5, True, 1694476800000, 2),
    ("pano-c", 40.00970, -105.27060, None, True, 1740960000000, 3),
    ("flat-d", 40.01010, -105.26990, 120.0, False, 1730000000000, 4),
    ("flat-e", 40.00990, -105.27020, 250.0, False, 1700000000000, 5),
]


def panorama(seed, width=4096):
    height = width // 2
    rng = np.random.default_rng(seed)
    yaw = (np.arange(width) + 0.0) / width * 2 * math.pi
    pitch = (0.5 - np.arange(height) / height) * math.pi
    Y, P = np.meshgrid(yaw, pitch)
    img = np.zeros((height, width, 3), dtype=np.float64)

    # Sky: blue gradient, lighter toward the horizon.
    sky = P > 0
    t = np.clip(P / (math.pi / 2), 0, 1)
    img[..., 0] = np.where(sky, 120 + 90 * (1 - t), 0)
    img[..., 1] = np.where(sky, 170 + 60 * (1 - t), 0)
    img[..., 2] = np.where(sky, 235 + 15 * (1 - t), 0)

    # Facades: blocks of varying height and colour around the horizon.
    blocks = rng.integers(10, 18)
    edges = np.sort(rng.uniform(0, 2 * math.pi, blocks))
    colours = rng.integers(60, 220, size=(blocks, 3))
    tops = rng.uniform(0.15, 0.6, blocks)
    idx = np.searchsorted(edges, Y, side="right") % blocks
    facade = (P > 0) & (P < tops[idx])
    window = (np.sin(Y * 180) > 0.6) & (np.sin(P * 90) > 0.3)
    for c in range(3):
        col = colours[idx, c] * np.where(window, 0.55, 1.0)
        img[..., c] = np.where(facade, col, img[..., c])

    # Road and pavement below the horizon, with a dashed centre line heading north.
    ground = P <= 0
    depth = np.clip(-P / (math.pi / 2), 0, 1)
    grey = 70 + 60 * depth
    pavement = np.cos(Y) ** 2 < 0.35
    for c, base in enumerate((grey, grey, grey)):
        img[..., c] = np.where(ground, np.where(pavement, base + 50, base), img[..., c])
    line = ground & (np.abs(np.sin(Y)) < 0.012) & (np.sin(-1.0 / np.tan(np.clip(-P, 1e-3, None)) * 3) > 0)
    for c, v in enumerate((240, 220, 90)):
        img[..., c] = np.where(line, v, img[..., c])

    # A red north marker and a blue east marker on the horizon.
    for centre, colour in ((0.0, (220, 30, 30)), (math.pi / 2, (30, 30, 220))):
        d = np.angle(np.exp(1j * (Y - centre)))
        m = (np.abs(d) < 0.02) & (np.abs(P) < 0.08)
        for c in range(3):
            img[..., c] = np.where(m, colour[c], img[..., c])

    return Image.fromarray(np.clip(img, 0, 255).round().astype(np.uint8), "RGB")


def flat(seed):
    rng = np.random.default_rng(seed)
    base = rng.integers(40, 200, 3)
    arr = np.tile(base.astype(np.uint8), (384, 512, 1))
    return Image.fromarray(arr, "RGB")


def offset(east, north):
    lat0, lon0 = map(math.radians, CAMERA)
    lat = lat0 + north / R
    lon = lon0 + east / (R * math.cos(lat0))
    return round(math.degrees(lat), 9), round(math.degrees(lon), 9)


def imagery():
    out = ROOT / "imagery"
    out.mkdir(exist_ok=True)
    records = []
    for node_id, lat, lon, compass, pano, captured, seed in NODES:
        rec = {"id": node_id, "lat_deg": lat, "lon_deg": lon, "is_pano": pano, "captured_at_ms": captured}
        if compass is not None:
            rec["compass_deg"] = compass
        if pano:
            rec.update(width=4096, height=2048)
            panorama(seed).save(out / f"{node_id}.png", optimize=True)
        else:
            rec.update(width=512, height=384)
            flat(seed).save(out / f"{node_id}.png")
        records.append(rec)
    (out / "nodes.json").write_text(json.dumps(records, indent=2) + "\n")

    # Shape of a Graph API image search response, for parser tests.
    data = []
    for node_id, lat, lon, compass, pano, captured, _ in NODES:
        item = {
            "id": str(100000000000000 + len(data)),
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "is_pano": pano,
            "captured_at": captured,
            "thumb_1024_url": f"https://images.example.invalid/{node_id}/1024.jpg",
            "thumb_original_url": f"https://images.example.invalid/{node_id}/original.jpg",
            "width": 4096 if pano else 512,
            "height": 2048 if pano else 384,
        }
        if compass is not None:
            item["compass_angle"] = compass
        data.append(item)
    (out / "mapillary_search.json").write_text(json.dumps({"data": data}, indent=2) + "\n")


def scenes():
    out = ROOT / "scenes"
    out.mkdir(exist_ok=True)
    cyclist_path = [offset(-7.0, 16.0), offset(2.0, 18.0), offset(9.0, 21.0)]
    pedestrian = offset(4.0, 11.0)
    demo = {
        "schema_version": 1,
        "node_id": "pano-a",
        "camera_base": {"lat_deg": CAMERA[0], "lon_deg": CAMERA[1], "heading_deg": 5.0,
                        "pitch_deg": -4.0, "hfov_deg": 75.0, "height_m": 2.5},
        "keyframes": [
            {"t_s": 0.0, "heading_deg": 5.0, "pitch_deg": -4.0, "hfov_deg": 75.0},
            {"t_s": 5.0, "heading_deg": 25.0, "pitch_deg": -2.0, "hfov_deg": 60.0},
        ],
        "actors": [
            {"id": "cyclist", "lat_deg": cyclist_path[0][0], "lon_deg": cyclist_path[0][1],
             "width_m": 0.8, "height_m": 1.8, "prompt": "a cyclist in a yellow jacket riding east",
             "trajectory": {"points": [list(p) for p in cyclist_path], "start_s": 0.0, "end_s": 4.5}},
            {"id": "pedestrian", "lat_deg": pedestrian[0], "lon_deg": pedestrian[1],
             "width_m": 0.6, "height_m": 1.7, "prompt": "a woman waiting at the kerb with a red umbrella"},
        ],
        "duration_s": 5.0,
        "fps": 16.0,
        "resolution": [1280, 720],
        "scene_prompt": "a quiet residential street on an overcast autumn morning",
    }
    (out / "demo.json").write_text(json.dumps(demo, indent=2) + "\n")

    broken = json.loads(json.dumps(demo))
    broken["actors"][0]["trajectory"]["end_s"] = 7.5
    far = offset(0.0, 20_000.0)
    broken["actors"][1]["lat_deg"], broken["actors"][1]["lon_deg"] = far
    (out / "broken.json").write_text(json.dumps(broken, indent=2) + "\n")


if __name__ == "__main__":
    imagery()
    scenes()
