"""App metadata, SDK labels and sensitive-API classes, plus the dataset filters."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .ir import SdkCoordinate

DEFAULT_MIN_AUDIENCE = 10_000
EXCLUDED_VERSION_WORDS = ("alpha", "beta", "test", "dev", "debug", "qa")

# Google Play app categories; all games share the single "Game" category.
APP_CATEGORIES = (
    "Art and Design",
    "Auto and Vehicles",
    "Beauty",
    "Books and Reference",
    "Business",
    "Comics",
    "Communication",
    "Dating",
    "Education",
    "Entertainment",
    "Events",
    "Finance",
    "Food and Drink",
    "Game",
    "Health and Fitness",
    "House and Home",
    "Libraries and Demo",
    "Lifestyle",
    "Maps and Navigation",
    "Medical",
    "Music and Audio",
    "News and Magazines",
    "Parenting",
    "Personalization",
    "Photography",
    "Productivity",
    "Shopping",
    "Social",
    "Sports",
    "Tools",
    "Travel and Local",
    "Video Players and Editors",
    "Weather",
)
assert len(APP_CATEGORIES) == 33


class IngestError(ValueError):
    pass


class Label(str, enum.Enum):
    ADS = "ADS"
    ANALYTICS = "ANALYTICS"
    SECURITY_AND_AUTHENTICATION = "SECURITY_AND_AUTHENTICATION"
    TOOLS_OTHER = "TOOLS_OTHER"
    UNCLEAR_UNFOUND = "UNCLEAR_UNFOUND"


class SubLabel(str, enum.Enum):
    APP_HEALTH = "APP_HEALTH"
    USER_BEHAVIOR = "USER_BEHAVIOR"
    SECURITY_ANTI_FRAUD = "SECURITY_ANTI_FRAUD"
    SECURITY_PAYMENTS = "SECURITY_PAYMENTS"
    SECURITY_AUTHENTICATION = "SECURITY_AUTHENTICATION"
    SECURITY_ANTI_MALWARE = "SECURITY_ANTI_MALWARE"
    SECURITY_OTHER = "SECURITY_OTHER"
    LOCATION = "LOCATION"
    LOCATION_PERSON = "LOCATION_PERSON"
    LOCATION_OBJECT = "LOCATION_OBJECT"
    LOCATION_MAPS = "LOCATION_MAPS"
    LOCATION_OTHER = "LOCATION_OTHER"
    SOCIAL = "SOCIAL"
    OTHER = "OTHER"


SUBLABEL_PARENT = {
    SubLabel.APP_HEALTH: Label.ANALYTICS,
    SubLabel.USER_BEHAVIOR: Label.ANALYTICS,
    SubLabel.SECURITY_ANTI_FRAUD: Label.SECURITY_AND_AUTHENTICATION,
    SubLabel.SECURITY_PAYMENTS: Label.SECURITY_AND_AUTHENTICATION,
    SubLabel.SECURITY_AUTHENTICATION: Label.SECURITY_AND_AUTHENTICATION,
    SubLabel.SECURITY_ANTI_MALWARE: Label.SECURITY_AND_AUTHENTICATION,
    SubLabel.SECURITY_OTHER: Label.SECURITY_AND_AUTHENTICATION,
    SubLabel.LOCATION: Label.TOOLS_OTHER,
    SubLabel.LOCATION_PERSON: Label.TOOLS_OTHER,
    SubLabel.LOCATION_OBJECT: Label.TOOLS_OTHER,
    SubLabel.LOCATION_MAPS: Label.TOOLS_OTHER,
    SubLabel.LOCATION_OTHER: Label.TOOLS_OTHER,
    SubLabel.SOCIAL: Label.TOOLS_OTHER,
    SubLabel.OTHER: Label.TOOLS_OTHER,
}


@dataclass(frozen=True)
class SdkLabel:
    label: Label
    sub_label: Optional[SubLabel] = None

    def __post_init__(self) -> None:
        if self.sub_label is not None and SUBLABEL_PARENT[self.sub_label] is not self.label:
            raise IngestError(f"sub-label {self.sub_label.value} does not belong to {self.label.value}")


class SignalClass(str, enum.Enum):
    LOCATION_COARSE = "LOCATION_COARSE"
    LOCATION_FINE = "LOCATION_FINE"
    APP_USAGE = "APP_USAGE"
    ACCOUNT_LIST = "ACCOUNT_LIST"
    OTHER = "OTHER"


@dataclass(frozen=True)
class AppRecord:
    app_id: str
    category: str
    audience_size: int
    declared_sdks: Optional[tuple[SdkCoordinate, ...]] = None

    def __post_init__(self) -> None:
        if self.category not in APP_CATEGORIES:
            raise IngestError(f"unknown app category {self.category!r}")
        if self.audience_size < 0:
            raise IngestError(f"negative audience size for {self.app_id}")

    @classmethod
    def from_json(cls, payload: Mapping) -> "AppRecord":
        declared = payload.get("declaredSdks")
        return cls(
            str(payload["appId"]),
            payload["category"],
            int(payload["audienceSize"]),
            tuple(SdkCoordinate.parse(c) for c in declared) if declared is not None else None,
        )

    def to_json(self) -> dict:
        out = {"appId": self.app_id, "category": self.category, "audienceSize": self.audience_size}
        if self.declared_sdks is not None:
            out["declaredSdks"] = [str(c) for c in self.declared_sdks]
        return out


def load_apps(path: Path | str) -> list[AppRecord]:
    apps = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                apps.append(AppRecord.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    ids = [a.app_id for a in apps]
    if len(set(ids)) != len(ids):
        raise IngestError(f"{path}: duplicate appId")
    return apps


def load_labels(path: Path | str) -> dict[SdkCoordinate, SdkLabel]:
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                sub = row.get("subLabel") or None
                labels[SdkCoordinate.parse(row["coordinate"])] = SdkLabel(
                    Label(row["label"]), SubLabel(sub) if sub else None
                )
            except (KeyError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    return labels


def load_signal_map(path: Path | str) -> dict[str, SignalClass]:
    out: dict[str, SignalClass] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                api, cls = row["api"], SignalClass(row["class"])
            except (KeyError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            if api in out and out[api] is not cls:
                raise IngestError(f"{path}:{lineno}: {api} mapped to two classes")
            out[api] = cls
    return out


def filter_sdk_versions(versions: Iterable[SdkCoordinate]) -> list[SdkCoordinate]:
    """Drop pre-release and internal builds by version label."""
    return [
        c for c in versions if not any(word in c.version.lower() for word in EXCLUDED_VERSION_WORDS)
    ]


def filter_apps(apps: Sequence[AppRecord], min_audience: int = DEFAULT_MIN_AUDIENCE) -> list[AppRecord]:
    """Apps with audience strictly above `min_audience`, in input order."""
    if min_audience < 0:
        raise IngestError("minimum audience must be non-negative")
    return [a for a in apps if a.audience_size > min_audience]


def market_reach(apps: Iterable[AppRecord]) -> int:
    """Summed 30-day active installs (users with several installs count more than once)."""
    return sum(a.audience_size for a in apps)


def load_ratings(path: Path | str) -> list[tuple[str, list[Optional[str]]]]:
    """Rater table `item,rater1,...`; an empty cell is a missing rating."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 3:
            raise IngestError(f"{path}: expected header item,rater1,rater2,...")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append((row[0], [cell or None for cell in row[1:]]))
    return rows
