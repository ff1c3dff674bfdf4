"""Synthetic cities with a known price law.

A city is a disk partitioned into Voronoi zones. Prices per square meter
follow::

    zone_price(z, s) = base_price_center * exp(-price_decay * d_z) * p_z * m_s
    valuation        = surface * zone_price(z, s) * local(x) * quality * (1 + e)

with ``d_z`` the distance of the zone site from the center in km, ``p_z`` a
lognormal per-zone perturbation, ``m_s`` a market index per semester
(linear trend plus jitter), ``local(x)`` a smooth micro-location factor built
from Gaussian bumps, ``quality = exp(q * (maintenance + finishing))`` on the
-1/0/1 scale and ``e ~ N(0, noise_sd_fraction)``. OMI ranges quote
``zone_price * (0.85, 1.15)``. Adverts are extra properties drawn from the
same law, priced at ``valuation * U(advert_markup_range)``; a fraction are
labelled prior appraisals and keep the plain valuation.

Draw order from one ``numpy.random.default_rng(seed)``: zone sites, zone
perturbations, market jitter, local bumps, PoIs (category by category),
appraisal properties one by one, adverts one by one.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ordinal
from .comparables import ComparableAd, dump_corpus
from .dataset import MAX_VALUATION, MIN_VALUATION, AppraisalRecord, dump_appraisals
from .errors import GeometryError
from .geo import EARTH_RADIUS_M, GeoPoint, GeoPolygon, point_in_polygon
from .omi import OmiZone, OmiZoneStore, SemesterId, dump_zones
from .poi import POI_CATEGORIES, PoiEntry, dump_pois

__all__ = ["SynthConfig", "SyntheticCity", "generate_city_data", "write_city", "generate_city", "CITY_FILES"]

CITY_FILES = {
    "zones": "zones.json",
    "pois": "pois.csv",
    "adverts": "adverts.csv",
    "appraisals": "appraisals.csv",
    "truth": "truth.json",
}

_ENERGY = ("A", "B", "C", "D", "E", "F", "G")
_ORIENT = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
_DISK_VERTICES = 96


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_properties: int = 4000
    n_zones: int = 41
    city_center: GeoPoint = GeoPoint(45.0703, 7.6869)
    city_radius: float = 6000.0
    base_price_center: float = 3500.0
    price_decay: float = 0.15
    noise_sd_fraction: float = 0.05
    advert_markup_range: tuple[float, float] = (1.0, 1.15)
    n_pois_per_category: int = 60
    n_adverts: int | None = None
    zone_price_sd: float = 0.15
    market_trend: float = -0.25
    local_price_amplitude: float = 0.25
    quality_effect: float = 0.05
    prior_appraisal_fraction: float = 0.2
    start_year: int = 2011
    end_year: int = 2016
    zone_prefix: str = "Z"

    def __post_init__(self):
        if self.n_zones < 2:
            raise ValueError("n_zones must be >= 2")
        lo, hi = self.advert_markup_range
        if not 1.0 <= lo <= hi <= 1.5:
            raise ValueError("advert_markup_range must lie within [1.0, 1.5]")
        if not 0 <= self.noise_sd_fraction <= 0.3:
            raise ValueError("noise_sd_fraction must be in [0, 0.3]")
        if self.n_properties < 1 or self.city_radius <= 0:
            raise ValueError("n_properties and city_radius must be positive")

    @property
    def adverts(self) -> int:
        return 2 * self.n_properties if self.n_adverts is None else self.n_adverts

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["city_center"] = [self.city_center.latitude, self.city_center.longitude]
        d["advert_markup_range"] = list(self.advert_markup_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "city_center" in d:
            d["city_center"] = GeoPoint(*d["city_center"])
        if "advert_markup_range" in d:
            d["advert_markup_range"] = tuple(d["advert_markup_range"])
        return cls(**d)


@dataclass
class SyntheticCity:
    config: SynthConfig
    zones: list
    pois: list
    adverts: list
    appraisals: list
    truth: dict

    @property
    def store(self) -> OmiZoneStore:
        return OmiZoneStore(self.zones)


class _Frame:
    """Local tangent plane around the center: x east, y north, meters."""

    def __init__(self, center: GeoPoint):
        self.lat0 = center.latitude
        self.lon0 = center.longitude
        self.coslat = math.cos(math.radians(self.lat0))

    def to_geo(self, x: float, y: float) -> GeoPoint:
        lat = self.lat0 + math.degrees(y / EARTH_RADIUS_M)
        lon = self.lon0 + math.degrees(x / (EARTH_RADIUS_M * self.coslat))
        return GeoPoint(lat, lon)


def _clip(poly: list, a: np.ndarray, b: float) -> list:
    """Sutherland-Hodgman clip of a convex polygon to ``a . x <= b``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a[0] * p[0] + a[1] * p[1] - b
        fq = a[0] * q[0] + a[1] * q[1] - b
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _area(poly) -> float:
    s = 0.0
    for i in range(len(poly)):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % len(poly)]
        s += x0 * y1 - x1 * y0
    return 0.5 * abs(s)


def _voronoi_cells(sites: np.ndarray, radius: float) -> list:
    disk = [
        (radius * math.cos(2 * math.pi * k / _DISK_VERTICES), radius * math.sin(2 * math.pi * k / _DISK_VERTICES))
        for k in range(_DISK_VERTICES)
    ]
    cells = []
    for i, si in enumerate(sites):
        cell = list(disk)
        for j, sj in enumerate(sites):
            if i == j:
                continue
            a = sj - si
            b = float(a @ (0.5 * (si + sj)))
            cell = _clip(cell, a, b)
            if len(cell) < 3:
                break
        if len(cell) < 3 or _area(cell) < 1.0:
            raise GeometryError(f"Voronoi cell {i} is degenerate")
        cells.append(cell)
    return cells


def _disk_point(rng, radius):
    r = radius * math.sqrt(rng.random())
    th = 2 * math.pi * rng.random()
    return r * math.cos(th), r * math.sin(th)


def _semesters(start_year, end_year):
    return [SemesterId(y, h) for y in range(start_year, end_year + 1) for h in (1, 2)]


def _pick(rng, options, probs=None):
    return options[int(rng.choice(len(options), p=probs))]


def generate_city_data(cfg: SynthConfig) -> SyntheticCity:
    """Generate a city in memory."""
    rng = np.random.default_rng(cfg.seed)
    frame = _Frame(cfg.city_center)
    R = cfg.city_radius

    # zone sites, rejection-sampled with a minimum spacing
    spacing = 0.5 * R / math.sqrt(cfg.n_zones)
    sites = []
    attempts = 0
    while len(sites) < cfg.n_zones:
        attempts += 1
        if attempts > 10_000 * cfg.n_zones:
            raise GeometryError("could not place zone sites")
        x, y = _disk_point(rng, 0.95 * R)
        if all(math.hypot(x - a, y - b) >= spacing for a, b in sites):
            sites.append((x, y))
    sites = np.array(sites)
    cells = _voronoi_cells(sites, R)

    pert = np.exp(rng.normal(0.0, cfg.zone_price_sd, size=cfg.n_zones))
    sems = _semesters(cfg.start_year - 1, cfg.end_year)
    jitter = rng.normal(0.0, 0.01, size=len(sems))
    market = {
        s: (1.0 + cfg.market_trend * k / (len(sems) - 1)) * (1.0 + jitter[k]) for k, s in enumerate(sems)
    }

    n_bumps = 40
    bump_c = np.array([_disk_point(rng, R) for _ in range(n_bumps)])
    bump_a = rng.normal(0.0, 1.0, size=n_bumps)
    bump_w = rng.uniform(0.04, 0.1, size=n_bumps) * R

    names = [f"{cfg.zone_prefix}{i + 1:02d}" for i in range(cfg.n_zones)]
    base = {}
    zones = []
    for i, cell in enumerate(cells):
        d_km = math.hypot(*sites[i]) / 1000.0
        base[names[i]] = cfg.base_price_center * math.exp(-cfg.price_decay * d_km) * float(pert[i])
        ranges = {}
        for s in sems:
            p = base[names[i]] * market[s]
            ranges[(s, "residential")] = (round(0.85 * p, 2), round(1.15 * p, 2))
        poly = GeoPolygon([(g.latitude, g.longitude) for g in (frame.to_geo(x, y) for x, y in cell)])
        zones.append(OmiZone(names[i], poly, ranges))
    store = OmiZoneStore(zones)

    def zone_price(z: str, date: dt.date) -> float:
        return base[z] * market[SemesterId.from_date(date)]

    def local(x: float, y: float) -> float:
        d2 = (bump_c[:, 0] - x) ** 2 + (bump_c[:, 1] - y) ** 2
        field = float(np.sum(bump_a * np.exp(-d2 / (2 * bump_w**2))))
        return math.exp(cfg.local_price_amplitude * math.tanh(field))

    pois = []
    for cat in POI_CATEGORIES:
        for k in range(cfg.n_pois_per_category):
            r = R * rng.random() ** 1.5
            th = 2 * math.pi * rng.random()
            pois.append(PoiEntry(cat, frame.to_geo(r * math.cos(th), r * math.sin(th)), f"{cat} {k + 1}"))

    def draw_site():
        while True:
            x, y = _disk_point(rng, R)
            p = frame.to_geo(x, y)
            hits = [z.name for z in zones if z.polygon.in_bbox(p) and point_in_polygon(p, z.polygon)]
            if len(hits) == 1:
                return x, y, p, hits[0]

    def draw_surface():
        while True:
            s = float(np.exp(rng.normal(math.log(85.0), 0.38)))
            if 35.0 <= s <= 249.0:
                return round(s, 1)

    def draw_date(first_year):
        lo = dt.date(first_year, 1, 1).toordinal()
        hi = dt.date(cfg.end_year, 12, 31).toordinal()
        return dt.date.fromordinal(int(rng.integers(lo, hi + 1)))

    lv = ordinal.LEVELS

    def quality_of(maint, finish):
        return math.exp(cfg.quality_effect * (ordinal.encode(maint) + ordinal.encode(finish)))

    appraisals, prop_truth = [], []
    while len(appraisals) < cfg.n_properties:
        x, y, p, z = draw_site()
        surface = draw_surface()
        maint = _pick(rng, lv, [0.25, 0.5, 0.25])
        finish = _pick(rng, lv, [0.25, 0.5, 0.25])
        inst = _pick(rng, lv, [0.25, 0.5, 0.25])
        view = _pick(rng, lv, [0.3, 0.5, 0.2])
        year = int(rng.integers(1900, 2016))
        baths = int(min(7, 1 + (surface > 110) + rng.poisson(0.2)))
        floor = int(rng.integers(-1, 12))
        elevator = bool(rng.random() < 0.6)
        energy = _pick(rng, _ENERGY)
        orient = _pick(rng, _ORIENT)
        date = draw_date(cfg.start_year)
        noise = float(rng.normal(0.0, 1.0)) * cfg.noise_sd_fraction
        zp = zone_price(z, date)
        loc_f = local(x, y)
        qual = quality_of(maint, finish)
        valuation = round(float(surface * zp * loc_f * qual * (1.0 + noise)), 2)
        if not MIN_VALUATION <= valuation <= MAX_VALUATION:
            continue
        d_km = math.hypot(x, y) / 1000.0
        area = (
            "Central" if d_km < 0.25 * R / 1000 else
            "Near-central" if d_km < 0.5 * R / 1000 else
            "Larger City Boundary" if d_km < 0.75 * R / 1000 else
            "Suburbs"
        )
        pid = f"P{len(appraisals) + 1:06d}"
        appraisals.append(
            AppraisalRecord(
                id=pid,
                construction_year=year,
                bathrooms=baths,
                floor=floor,
                surface=surface,
                elevator=elevator,
                maintenance=maint,
                installations_quality=inst,
                finishing_quality=finish,
                view=view,
                energy_class=energy,
                registered_use="residential",
                orientation=orient,
                location=p,
                address=f"Via Sintetica {len(appraisals) + 1}",
                city_area=area,
                appraisal_date=date,
                valuation=valuation,
                is_complex=False,
            )
        )
        prop_truth.append(
            {"id": pid, "zone": z, "zone_price": zp, "local_factor": loc_f, "quality": qual, "noise": noise, "valuation": valuation}
        )

    adverts, ad_truth = [], []
    lo_m, hi_m = cfg.advert_markup_range
    for k in range(cfg.adverts):
        x, y, p, z = draw_site()
        surface = draw_surface()
        maint = _pick(rng, lv, [0.25, 0.5, 0.25])
        finish = _pick(rng, lv, [0.25, 0.5, 0.25])
        floor = int(rng.integers(-1, 12))
        date = draw_date(cfg.start_year - 1)
        noise = float(rng.normal(0.0, 1.0)) * cfg.noise_sd_fraction
        prior = bool(rng.random() < cfg.prior_appraisal_fraction)
        markup = 1.0 if prior else float(rng.uniform(lo_m, hi_m))
        valuation = round(float(surface * zone_price(z, date) * local(x, y)) * quality_of(maint, finish) * max(0.05, 1.0 + noise), 2)
        price = round(float(valuation * markup), 2)
        adverts.append(ComparableAd(p, surface, price, floor, maint, date, "prior_appraisal" if prior else "advert"))
        ad_truth.append({"index": k, "zone": z, "valuation": valuation, "markup": markup})

    truth = {
        "config": cfg.to_dict(),
        "zones": {n: {"site_xy_m": [float(a) for a in sites[i]], "base_price": base[n]} for i, n in enumerate(names)},
        "market_index": {str(s): v for s, v in market.items()},
        "local_bumps": [
            {"xy_m": [float(a) for a in bump_c[k]], "amplitude": float(bump_a[k]), "width_m": float(bump_w[k])}
            for k in range(n_bumps)
        ],
        "properties": prop_truth,
        "adverts": ad_truth,
    }
    return SyntheticCity(cfg, zones, pois, adverts, appraisals, truth)


def write_city(city: SyntheticCity, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in CITY_FILES.items()}
    dump_zones(city.zones, paths["zones"])
    dump_pois(city.pois, paths["pois"])
    dump_corpus(city.adverts, paths["adverts"])
    dump_appraisals(city.appraisals, paths["appraisals"])
    paths["truth"].write_text(json.dumps(city.truth, indent=1) + "\n", encoding="utf-8")
    return paths


def generate_city(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    """Generate a city and write its five files under ``out_dir``."""
    return write_city(generate_city_data(cfg), out_dir)
