"""Space-time dataset representation, CSV ingestion, normalization, splits.

A dataset is an ordered list of observations, each tying a space-time
point (x, y, t) to a measured value, with optional integer station labels.
Datasets are immutable after construction and safe to share across
threads; every transformation returns a new instance.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np


class DataError(Exception):
    """Malformed input data or an invalid dataset operation."""


@dataclass(frozen=True)
class SpaceTimePoint:
    """One input location: two spatial coordinates and a time coordinate."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        for name in ("x", "y", "t"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DataError(f"non-finite coordinate {name}={v!r}")

    def as_array(self):
        return np.array([self.x, self.y, self.t])


@dataclass(frozen=True)
class Observation:
    """A measured value at one space-time point."""

    point: SpaceTimePoint
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataError(f"non-finite value {self.value!r}")


class Dataset:
    """Ordered, duplicate-free collection of observations.

    Parameters
    ----------
    observations : sequence of Observation
    station_ids : sequence of int, optional
        Integer labels parallel to ``observations``.
    normalization : (mean, stddev) pair, optional
        Transform already applied to the values; stddev must be > 0.
    """

    def __init__(self, observations, station_ids=None, normalization=None):
        obs = tuple(observations)
        if not obs:
            raise DataError("dataset must contain at least one observation")
        seen = set()
        for o in obs:
            key = (o.point.x, o.point.y, o.point.t)
            if key in seen:
                raise DataError(f"duplicate space-time point {key}")
            seen.add(key)
        if station_ids is not None:
            station_ids = tuple(int(s) for s in station_ids)
            if len(station_ids) != len(obs):
                raise DataError("station_ids length does not match observations")
        if normalization is not None:
            mean, std = normalization
            if not (math.isfinite(mean) and math.isfinite(std) and std > 0):
                raise DataError(f"invalid normalization stats {normalization!r}")
            normalization = (float(mean), float(std))
        self.observations = obs
        self.station_ids = station_ids
        self.normalization = normalization

    def __len__(self):
        return len(self.observations)

    def points(self):
        """All input locations as an (n, 3) float array (columns x, y, t)."""
        return np.array([[o.point.x, o.point.y, o.point.t] for o in self.observations])

    def values(self):
        return np.array([o.value for o in self.observations])

    def fingerprint(self):
        """Row count plus a checksum over the exact decimal row content."""
        h = hashlib.sha256()
        for i, o in enumerate(self.observations):
            sid = "" if self.station_ids is None else repr(self.station_ids[i])
            row = f"{o.point.x!r},{o.point.y!r},{o.point.t!r},{o.value!r},{sid}\n"
            h.update(row.encode())
        return {"rows": len(self.observations), "sha256": h.hexdigest()}

    def replace_values(self, values, normalization=None):
        obs = tuple(
            Observation(o.point, float(v))
            for o, v in zip(self.observations, values)
        )
        return Dataset(obs, self.station_ids, normalization)


def ingest_csv(path, column_map):
    """Read a dataset from a CSV file with a header row.

    ``column_map`` maps the roles "x", "y", "t", "value" (and optionally
    "station") to column names in the file. Rows are kept in file order;
    duplicate space-time points and non-finite values are rejected with
    the offending line number.
    """
    required = ("x", "y", "t", "value")
    for role in required:
        if role not in column_map:
            raise DataError(f"column map is missing the {role!r} role")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    observations = []
    station_ids = [] if "station" in column_map else None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for role in required:
            if column_map[role] not in header:
                raise DataError(
                    f"column {column_map[role]!r} (role {role!r}) not in header {header}"
                )
        if station_ids is not None and column_map["station"] not in header:
            raise DataError(f"station column {column_map['station']!r} not in header")
        seen = set()
        for row in reader:
            line = reader.line_num
            try:
                x = float(row[column_map["x"]])
                y = float(row[column_map["y"]])
                t = float(row[column_map["t"]])
                value = float(row[column_map["value"]])
            except (TypeError, ValueError) as exc:
                raise DataError(f"line {line}: unparseable row ({exc})") from exc
            if not all(math.isfinite(v) for v in (x, y, t)):
                raise DataError(f"line {line}: non-finite coordinate")
            if not math.isfinite(value):
                raise DataError(f"line {line}: non-finite value {row[column_map['value']]!r}")
            key = (x, y, t)
            if key in seen:
                raise DataError(f"line {line}: duplicate space-time point {key}")
            seen.add(key)
            observations.append(Observation(SpaceTimePoint(x, y, t), value))
            if station_ids is not None:
                try:
                    station_ids.append(int(row[column_map["station"]]))
                except (TypeError, ValueError) as exc:
                    raise DataError(f"line {line}: unparseable station id") from exc
    if not observations:
        raise DataError(f"{path} contains no data rows")
    return Dataset(observations, station_ids)


def export_csv(data, path, column_map):
    """Write a dataset back out in the ingestion format.

    Floats are written in shortest round-trip decimal form, so canonical
    decimal inputs survive an ingest/export cycle bit-identically.
    """
    cols = [column_map["x"], column_map["y"], column_map["t"], column_map["value"]]
    has_station = "station" in column_map and data.station_ids is not None
    if has_station:
        cols.append(column_map["station"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i, o in enumerate(data.observations):
            row = [repr(o.point.x), repr(o.point.y), repr(o.point.t), repr(o.value)]
            if has_station:
                row.append(str(data.station_ids[i]))
            writer.writerow(row)


def normalize(data):
    """Shift and scale values to zero mean and unit (population) stddev.

    The applied (mean, stddev) pair is recorded on the result so
    ``denormalize`` can invert the transform exactly.
    """
    values = data.values()
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std == 0.0 or not math.isfinite(std):
        raise DataError("cannot normalize zero-variance values")
    return data.replace_values((values - mean) / std, normalization=(mean, std))


def denormalize(data):
    """Invert ``normalize`` using the recorded stats."""
    if data.normalization is None:
        raise DataError("dataset carries no normalization stats")
    mean, std = data.normalization
    return data.replace_values(data.values() * std + mean, normalization=None)


class RectangularView:
    """Station x timestep grid view of a dataset.

    Stations are sorted by id, timesteps ascending; every station must
    carry exactly the same timesteps and a fixed spatial position.
    """

    def __init__(self, station_ids, coords, times, values):
        self.station_ids = tuple(station_ids)
        self.coords = np.asarray(coords, dtype=np.float64)
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)

    @property
    def n_stations(self):
        return len(self.station_ids)

    @property
    def n_times(self):
        return self.times.size

    def station_points(self, t):
        """(S, 3) point array for every station at one timestep."""
        return np.column_stack([self.coords, np.full(self.n_stations, t)])


def rectangular_view(data):
    """Pivot a dataset into a stations x timesteps grid.

    Raises DataError when stations move, repeat a timestep, or cover
    different timestep sets (non-rectangular data).
    """
    if data.station_ids is None:
        raise DataError("rectangular view requires station ids")
    per_station = {}
    coords = {}
    for sid, o in zip(data.station_ids, data.observations):
        xy = (o.point.x, o.point.y)
        if sid in coords and coords[sid] != xy:
            raise DataError(f"station {sid} appears at multiple positions")
        coords[sid] = xy
        slot = per_station.setdefault(sid, {})
        if o.point.t in slot:
            raise DataError(f"station {sid} has duplicate timestep {o.point.t}")
        slot[o.point.t] = o.value
    sids = sorted(per_station)
    times = sorted(per_station[sids[0]])
    for sid in sids:
        if sorted(per_station[sid]) != times:
            raise DataError(
                f"non-rectangular data: station {sid} covers different timesteps"
            )
    values = np.array([[per_station[sid][t] for t in times] for sid in sids])
    return RectangularView(
        sids, np.array([coords[sid] for sid in sids]), np.array(times), values
    )


@dataclass(frozen=True)
class SplitRule:
    """Train/test partition rule.

    kind is one of:

    * ``uniform-by-station``: ``k`` train stations picked at an even
      stride through the sorted station ids (every other station when
      k is half the station count)
    * ``by-station-id-list``: explicit train station ``ids``
    * ``by-time-range``: train where ``t_min <= t <= t_max``
    """

    kind: str
    k: int | None = None
    ids: tuple | None = None
    t_min: float | None = None
    t_max: float | None = None

    KINDS = ("uniform-by-station", "by-station-id-list", "by-time-range")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DataError(f"unknown split rule {self.kind!r}")
        if self.kind == "uniform-by-station" and (self.k is None or self.k < 1):
            raise DataError("uniform-by-station requires k >= 1")
        if self.kind == "by-station-id-list" and not self.ids:
            raise DataError("by-station-id-list requires a non-empty id list")
        if self.kind == "by-time-range" and (self.t_min is None or self.t_max is None):
            raise DataError("by-time-range requires t_min and t_max")


def split_train_test(data, rule):
    """Partition a dataset into (train, test) per the rule.

    The partition is exact: every observation lands in exactly one side.
    """
    if rule.kind == "by-time-range":
        mask = [rule.t_min <= o.point.t <= rule.t_max for o in data.observations]
    else:
        if data.station_ids is None:
            raise DataError(f"split rule {rule.kind!r} requires station ids")
        stations = sorted(set(data.station_ids))
        if rule.kind == "uniform-by-station":
            if rule.k > len(stations):
                raise DataError(
                    f"k={rule.k} exceeds station count {len(stations)}"
                )
            train_ids = {stations[i * len(stations) // rule.k] for i in range(rule.k)}
        else:
            unknown = set(rule.ids) - set(stations)
            if unknown:
                raise DataError(f"unknown station ids in split rule: {sorted(unknown)}")
            train_ids = set(rule.ids)
        mask = [sid in train_ids for sid in data.station_ids]

    def subset(keep):
        idx = [i for i, m in enumerate(mask) if m == keep]
        if not idx:
            raise DataError("split rule produced an empty partition")
        sids = None if data.station_ids is None else [data.station_ids[i] for i in idx]
        return Dataset([data.observations[i] for i in idx], sids, data.normalization)

    return subset(True), subset(False)
