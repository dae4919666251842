"""Monitoring core: AOI registry, scene ingestion, change alerts, delivery.

All mutations funnel through one lock and append to the JSONL store, so the
on-disk log replays into exactly the live state. Alert delivery runs on a
background worker; webhook failures retry with exponential backoff and end up
dead-lettered rather than ever blocking ingestion.
"""

from __future__ import annotations

import json
import logging
import math
import os
import queue
import shutil
import threading
import time
import urllib.request
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from ..forest import Forest, load_forest
from ..pipelines import (
    BLOCKAGE,
    HOTSPOT,
    DetectionReport,
    class_raster_to_scene,
    render_classification,
    render_heatmap,
    run_blockage,
    run_hotspot,
    write_png,
)
from ..raster import SceneFormatError, load_scene, save_scene
from .store import JsonlStore

log = logging.getLogger(__name__)

PIPELINES = (HOTSPOT, BLOCKAGE)
MAX_DELIVERY_ATTEMPTS = 3


class MonitorError(Exception):
    """Base class for monitor-service domain errors."""


class UnknownIdError(MonitorError):
    pass


class DuplicateIdError(MonitorError):
    pass


class IngestError(MonitorError):
    """A scene could not be ingested; recorded as a failed-ingest entry."""


def _parse_ts(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class AOI:
    """A monitored territory and its alerting configuration."""

    aoi_id: str
    name: str
    pipeline: str
    model_path: str
    ingest_dir: str
    alert_threshold: float = 0.2
    notify: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.aoi_id or not self.name:
            raise ValueError("aoi_id and name must be non-empty")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if not (isinstance(self.alert_threshold, (int, float)) and self.alert_threshold > 0):
            raise ValueError("alert_threshold must be > 0")
        targets = tuple(self.notify)
        for t in targets:
            scheme, _, rest = t.partition(":")
            if scheme not in ("mailto", "webhook") or not rest:
                raise ValueError(f"notify target {t!r} must be mailto:<addr> or webhook:<url>")
        object.__setattr__(self, "notify", targets)
        object.__setattr__(self, "alert_threshold", float(self.alert_threshold))

    def to_dict(self) -> dict:
        return {
            "aoi_id": self.aoi_id,
            "name": self.name,
            "pipeline": self.pipeline,
            "model_path": self.model_path,
            "ingest_dir": self.ingest_dir,
            "alert_threshold": self.alert_threshold,
            "notify": list(self.notify),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AOI":
        return cls(
            aoi_id=doc["aoi_id"],
            name=doc["name"],
            pipeline=doc["pipeline"],
            model_path=doc["model_path"],
            ingest_dir=doc["ingest_dir"],
            alert_threshold=doc.get("alert_threshold", 0.2),
            notify=tuple(doc.get("notify", ())),
        )


@dataclass(frozen=True)
class Observation:
    """One measured waste extent for an AOI."""

    aoi_id: str
    scene_id: str
    acquired_at: datetime
    waste_area_m2: float
    waste_fraction: float
    report_path: str

    def to_dict(self) -> dict:
        return {
            "aoi_id": self.aoi_id,
            "scene_id": self.scene_id,
            "acquired_at": self.acquired_at.isoformat(),
            "waste_area_m2": self.waste_area_m2,
            "waste_fraction": self.waste_fraction,
            "report_path": self.report_path,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Observation":
        return cls(
            aoi_id=doc["aoi_id"],
            scene_id=doc["scene_id"],
            acquired_at=_parse_ts(doc["acquired_at"]),
            waste_area_m2=doc["waste_area_m2"],
            waste_fraction=doc["waste_fraction"],
            report_path=doc["report_path"],
        )


@dataclass(frozen=True)
class Alert:
    """A noticeable change between two consecutive observations.

    relative_change may be +inf (waste appeared where none was measured
    before); it serializes as the string "inf" to stay valid JSON.
    """

    alert_id: str
    aoi_id: str
    triggered_at: datetime
    previous_area_m2: float
    current_area_m2: float
    relative_change: float
    previous_scene_id: str
    current_scene_id: str
    acknowledged: bool = False

    def to_dict(self) -> dict:
        change = "inf" if math.isinf(self.relative_change) else self.relative_change
        return {
            "alert_id": self.alert_id,
            "aoi_id": self.aoi_id,
            "triggered_at": self.triggered_at.isoformat(),
            "previous_area_m2": self.previous_area_m2,
            "current_area_m2": self.current_area_m2,
            "relative_change": change,
            "previous_scene_id": self.previous_scene_id,
            "current_scene_id": self.current_scene_id,
            "acknowledged": self.acknowledged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Alert":
        change = doc["relative_change"]
        return cls(
            alert_id=doc["alert_id"],
            aoi_id=doc["aoi_id"],
            triggered_at=_parse_ts(doc["triggered_at"]),
            previous_area_m2=doc["previous_area_m2"],
            current_area_m2=doc["current_area_m2"],
            relative_change=math.inf if change == "inf" else float(change),
            previous_scene_id=doc["previous_scene_id"],
            current_scene_id=doc["current_scene_id"],
            acknowledged=doc.get("acknowledged", False),
        )


def evaluate_change(timeline: Sequence[Observation], threshold: float) -> Alert | None:
    """Compare the latest observation to the one before it.

    Fires when |relative change| meets the threshold; a jump from zero to a
    positive area counts as an infinite change and always fires. The alert id
    is deterministic in (aoi, scene), so re-evaluating the same data cannot
    mint a second alert.
    """
    if len(timeline) < 2:
        return None
    prev, cur = timeline[-2], timeline[-1]
    if prev.waste_area_m2 == 0:
        if cur.waste_area_m2 == 0:
            return None
        change = math.inf
    else:
        change = (cur.waste_area_m2 - prev.waste_area_m2) / prev.waste_area_m2
    if abs(change) < threshold:
        return None
    return Alert(
        alert_id=f"alert-{cur.aoi_id}-{cur.scene_id}",
        aoi_id=cur.aoi_id,
        triggered_at=cur.acquired_at,
        previous_area_m2=prev.waste_area_m2,
        current_area_m2=cur.waste_area_m2,
        relative_change=change,
        previous_scene_id=prev.scene_id,
        current_scene_id=cur.scene_id,
    )


def format_change(change: float) -> str:
    return "+inf%" if math.isinf(change) else f"{change:+.1%}"


def _default_webhook_post(url: str, payload: bytes) -> int:
    req = urllib.request.Request(
        url, data=payload, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(req, timeout=10) as resp:
        return resp.status


class MonitorService:
    """Single-writer monitoring service over a JSONL store directory.

    webhook_post, clock, and sleep are injectable for tests; defaults talk
    to the network, the wall clock, and time.sleep.
    """

    def __init__(
        self,
        store_dir: str | Path,
        webhook_post: Callable[[str, bytes], int] | None = None,
        clock: Callable[[], datetime] | None = None,
        sleep: Callable[[float], None] | None = None,
    ):
        self.store = JsonlStore(store_dir)
        self.store_dir = Path(store_dir)
        self._webhook_post = webhook_post or _default_webhook_post
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._sleep = sleep or time.sleep
        self._lock = threading.Lock()
        self._next_seq = 1
        self._aois: dict[str, AOI] = {}
        self._timelines: dict[str, list[Observation]] = {}
        self._alerts: dict[str, Alert] = {}
        self._deliveries: dict[tuple[str, str], dict] = {}
        self._failures: list[dict] = []
        self._forest_cache: dict[str, tuple[int, Forest]] = {}
        self._replay()
        self._queue: queue.Queue = queue.Queue()
        self._closed = False
        self._worker = threading.Thread(target=self._worker_loop, name="alert-dispatch", daemon=True)
        self._worker.start()

    # -- persistence ------------------------------------------------------

    def _replay(self) -> None:
        for kind, record in self.store.replay():
            self._next_seq = max(self._next_seq, record.get("seq", 0) + 1)
            if kind == "aoi":
                if record.get("op") == "delete":
                    aoi_id = record["aoi_id"]
                    self._aois.pop(aoi_id, None)
                    self._timelines.pop(aoi_id, None)
                    self._alerts = {k: a for k, a in self._alerts.items() if a.aoi_id != aoi_id}
                else:
                    aoi = AOI.from_dict(record["aoi"])
                    self._aois[aoi.aoi_id] = aoi
                    self._timelines.setdefault(aoi.aoi_id, [])
            elif kind == "observation":
                obs = Observation.from_dict(record["observation"])
                tl = self._timelines.setdefault(obs.aoi_id, [])
                tl.append(obs)
                tl.sort(key=lambda o: (o.acquired_at, o.scene_id))
            elif kind == "alert":
                alert = Alert.from_dict(record["alert"])
                self._alerts[alert.alert_id] = alert
            elif kind == "delivery":
                self._deliveries[(record["alert_id"], record["target"])] = record
            elif kind == "ingest_failure":
                self._failures.append(record)

    def _append(self, kind: str, record: dict) -> dict:
        """Write one log record and return it with its seq. Caller holds the lock."""
        record = {"seq": self._next_seq, **record}
        self._next_seq += 1
        self.store.append(kind, record)
        return record

    def snapshot(self) -> dict:
        """Plain-data view of the full state, for tests and diagnostics."""
        with self._lock:
            return {
                "aois": {k: a.to_dict() for k, a in self._aois.items()},
                "timelines": {
                    k: [o.to_dict() for o in tl] for k, tl in self._timelines.items()
                },
                "alerts": {k: a.to_dict() for k, a in self._alerts.items()},
                "deliveries": {f"{k[0]}::{k[1]}": v for k, v in self._deliveries.items()},
                "failures": list(self._failures),
            }

    # -- AOI registry -----------------------------------------------------

    def register_aoi(self, aoi: AOI) -> str:
        with self._lock:
            if aoi.aoi_id in self._aois:
                raise DuplicateIdError(f"AOI {aoi.aoi_id!r} already registered")
            self._append("aoi", {"op": "put", "aoi": aoi.to_dict()})
            self._aois[aoi.aoi_id] = aoi
            self._timelines.setdefault(aoi.aoi_id, [])
        log.info("registered AOI %s (%s pipeline)", aoi.aoi_id, aoi.pipeline)
        return aoi.aoi_id

    def list_aois(self) -> list[AOI]:
        with self._lock:
            return sorted(self._aois.values(), key=lambda a: a.aoi_id)

    def get_aoi(self, aoi_id: str) -> AOI:
        with self._lock:
            return self._require_aoi(aoi_id)

    def _require_aoi(self, aoi_id: str) -> AOI:
        try:
            return self._aois[aoi_id]
        except KeyError:
            raise UnknownIdError(f"unknown AOI {aoi_id!r}") from None

    def update_aoi(self, aoi_id: str, /, **changes) -> AOI:
        allowed = {"name", "pipeline", "model_path", "ingest_dir", "alert_threshold", "notify"}
        bad = set(changes) - allowed
        if bad:
            raise ValueError(f"cannot update fields {sorted(bad)}")
        with self._lock:
            current = self._require_aoi(aoi_id)
            updated = replace(current, **changes)
            self._append("aoi", {"op": "put", "aoi": updated.to_dict()})
            self._aois[aoi_id] = updated
            return updated

    def delete_aoi(self, aoi_id: str) -> None:
        with self._lock:
            self._require_aoi(aoi_id)
            self._append("aoi", {"op": "delete", "aoi_id": aoi_id})
            del self._aois[aoi_id]
            self._timelines.pop(aoi_id, None)
            self._alerts = {k: a for k, a in self._alerts.items() if a.aoi_id != aoi_id}

    # -- observations and alerts -----------------------------------------

    def timeline(self, aoi_id: str) -> list[Observation]:
        with self._lock:
            self._require_aoi(aoi_id)
            return list(self._timelines.get(aoi_id, []))

    def latest_observation(self, aoi_id: str) -> Observation | None:
        tl = self.timeline(aoi_id)
        return tl[-1] if tl else None

    def alerts(self, acknowledged: bool | None = None) -> list[Alert]:
        with self._lock:
            found = [
                a for a in self._alerts.values()
                if acknowledged is None or a.acknowledged == acknowledged
            ]
        return sorted(found, key=lambda a: (a.triggered_at, a.alert_id))

    def get_alert(self, alert_id: str) -> Alert:
        with self._lock:
            try:
                return self._alerts[alert_id]
            except KeyError:
                raise UnknownIdError(f"unknown alert {alert_id!r}") from None

    def ack_alert(self, alert_id: str) -> Alert:
        """Mark an alert acknowledged. Acking twice is a no-op, not an error."""
        with self._lock:
            try:
                alert = self._alerts[alert_id]
            except KeyError:
                raise UnknownIdError(f"unknown alert {alert_id!r}") from None
            if not alert.acknowledged:
                alert = replace(alert, acknowledged=True)
                self._append("alert", {"op": "put", "alert": alert.to_dict()})
                self._alerts[alert_id] = alert
            return alert

    def deliveries(self, alert_id: str | None = None) -> list[dict]:
        with self._lock:
            found = list(self._deliveries.values())
        if alert_id is not None:
            found = [d for d in found if d["alert_id"] == alert_id]
        return sorted(found, key=lambda d: (d["alert_id"], d["target"]))

    # -- ingestion --------------------------------------------------------

    def _forest_for(self, model_path: str) -> Forest:
        p = Path(model_path)
        mtime = p.stat().st_mtime_ns
        cached = self._forest_cache.get(str(p))
        if cached is not None and cached[0] == mtime:
            return cached[1]
        forest = load_forest(p)
        self._forest_cache[str(p)] = (mtime, forest)
        return forest

    def artifact_dir(self, aoi_id: str, scene_id: str) -> Path:
        return self.store_dir / "artifacts" / aoi_id / scene_id

    def _write_artifacts(self, aoi: AOI, scene, cr, report: DetectionReport) -> Path:
        final = self.artifact_dir(aoi.aoi_id, report.scene_id)
        tmp = final.with_name(final.name + f".tmp-{os.getpid()}")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        try:
            (tmp / "report.json").write_text(
                json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
            )
            save_scene(class_raster_to_scene(cr, scene.metadata), tmp / "classified")
            write_png(render_classification(cr), tmp / "overlay.png")
            write_png(render_heatmap(cr), tmp / "heatmap.png")
            if final.exists():
                # Leftover from an ingest that never committed its observation.
                shutil.rmtree(final)
            os.replace(tmp, final)
        finally:
            if tmp.exists():
                shutil.rmtree(tmp)
        return final / "report.json"

    def ingest_scene(self, aoi_id: str, scene_dir: str | Path) -> Observation:
        """Run the AOI's pipeline on one scene and commit the observation.

        Pipeline and scene errors become failed-ingest log entries and raise
        IngestError. A scene_id already observed for this AOI raises
        DuplicateIdError without recording a failure.
        """
        aoi = self.get_aoi(aoi_id)
        scene_dir = Path(scene_dir)
        try:
            scene = load_scene(scene_dir)
            self._check_duplicate(aoi_id, scene.metadata.scene_id)
            forest = self._forest_for(aoi.model_path)
            if aoi.pipeline == BLOCKAGE:
                cr, _, report = run_blockage(scene, forest)
            else:
                cr, report = run_hotspot(scene, forest)
            report_path = self._write_artifacts(aoi, scene, cr, report)
        except DuplicateIdError:
            raise
        except (SceneFormatError, ValueError, KeyError, OSError) as exc:
            with self._lock:
                entry = {
                    "aoi_id": aoi_id,
                    "scene_dir": str(scene_dir),
                    "error": str(exc),
                    "at": self._clock().isoformat(),
                }
                self._failures.append(self._append("ingest_failure", entry))
            log.warning("ingest failed for %s from %s: %s", aoi_id, scene_dir, exc)
            raise IngestError(str(exc)) from exc

        obs = Observation(
            aoi_id=aoi_id,
            scene_id=report.scene_id,
            acquired_at=scene.metadata.acquired_at,
            waste_area_m2=report.waste_area_m2,
            waste_fraction=report.waste_fraction,
            report_path=str(report_path),
        )
        with self._lock:
            self._require_aoi(aoi_id)
            tl = self._timelines.setdefault(aoi_id, [])
            if any(o.scene_id == obs.scene_id for o in tl):
                raise DuplicateIdError(f"scene {obs.scene_id!r} already observed for {aoi_id!r}")
            self._append("observation", {"observation": obs.to_dict()})
            tl.append(obs)
            tl.sort(key=lambda o: (o.acquired_at, o.scene_id))
            alert = evaluate_change(tl, self._aois[aoi_id].alert_threshold)
            if alert is not None and alert.alert_id not in self._alerts:
                self._append("alert", {"op": "put", "alert": alert.to_dict()})
                self._alerts[alert.alert_id] = alert
                self._queue.put((alert, self._aois[aoi_id]))
        log.info("ingested %s for %s: %.1f m2", obs.scene_id, aoi_id, obs.waste_area_m2)
        return obs

    def _check_duplicate(self, aoi_id: str, scene_id: str) -> None:
        with self._lock:
            if any(o.scene_id == scene_id for o in self._timelines.get(aoi_id, [])):
                raise DuplicateIdError(f"scene {scene_id!r} already observed for {aoi_id!r}")

    def poll_once(self) -> dict:
        """Scan every AOI's ingest directory and ingest unseen scenes.

        Scenes ingest in acquired_at order regardless of directory order.
        Re-polling with nothing new is a no-op.
        """
        summary = {"ingested": [], "failed": [], "skipped": 0}
        for aoi in self.list_aois():
            ingest_dir = Path(aoi.ingest_dir)
            if not ingest_dir.is_dir():
                continue
            with self._lock:
                seen = {o.scene_id for o in self._timelines.get(aoi.aoi_id, [])}
            candidates = []
            for child in sorted(ingest_dir.iterdir()):
                meta_path = child / "scene.json"
                if not meta_path.is_file():
                    continue
                try:
                    doc = json.loads(meta_path.read_text(encoding="utf-8"))
                    scene_id = doc["scene_id"]
                    acquired = _parse_ts(doc["acquired_at"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    summary["failed"].append(
                        {"aoi_id": aoi.aoi_id, "scene_dir": str(child), "error": str(exc)}
                    )
                    continue
                if scene_id in seen:
                    summary["skipped"] += 1
                    continue
                candidates.append((acquired, scene_id, child))
            for _, scene_id, child in sorted(candidates, key=lambda c: (c[0], c[1])):
                try:
                    obs = self.ingest_scene(aoi.aoi_id, child)
                except (IngestError, DuplicateIdError) as exc:
                    summary["failed"].append(
                        {"aoi_id": aoi.aoi_id, "scene_dir": str(child), "error": str(exc)}
                    )
                    continue
                summary["ingested"].append({"aoi_id": aoi.aoi_id, "scene_id": obs.scene_id})
        return summary

    # -- alert delivery ---------------------------------------------------

    def _worker_loop(self) -> None:
        while True:
            item = self._queue.get()
            try:
                if item is None:
                    return
                alert, aoi = item
                self._dispatch_alert(alert, aoi)
            except Exception:
                log.exception("alert dispatch crashed")
            finally:
                self._queue.task_done()

    def _record_delivery(self, alert_id: str, target: str, status: str, attempts: int, detail: str) -> None:
        record = {
            "alert_id": alert_id,
            "target": target,
            "status": status,
            "attempts": attempts,
            "detail": detail,
            "finished_at": self._clock().isoformat(),
        }
        with self._lock:
            self._deliveries[(alert_id, target)] = self._append("delivery", record)

    def _dispatch_alert(self, alert: Alert, aoi: AOI) -> None:
        mailto = [t for t in aoi.notify if t.startswith("mailto:")]
        webhooks = [t for t in aoi.notify if t.startswith("webhook:")]
        if mailto:
            try:
                path = self._write_outbox(alert, aoi, [t.partition(":")[2] for t in mailto])
                for target in mailto:
                    self._record_delivery(alert.alert_id, target, "delivered", 1, str(path))
            except OSError as exc:
                for target in mailto:
                    self._record_delivery(alert.alert_id, target, "dead", 1, str(exc))
        payload = json.dumps(alert.to_dict()).encode("utf-8")
        for target in webhooks:
            url = target.partition(":")[2]
            detail = ""
            for attempt in range(1, MAX_DELIVERY_ATTEMPTS + 1):
                try:
                    status = self._webhook_post(url, payload)
                except Exception as exc:
                    detail = str(exc)
                    status = None
                if status is not None and 200 <= status < 300:
                    self._record_delivery(alert.alert_id, target, "delivered", attempt, f"HTTP {status}")
                    break
                if status is not None:
                    detail = f"HTTP {status}"
                if attempt < MAX_DELIVERY_ATTEMPTS:
                    self._sleep(2.0 ** (attempt - 1))
            else:
                self._record_delivery(alert.alert_id, target, "dead", MAX_DELIVERY_ATTEMPTS, detail)
                log.warning("webhook %s dead after %d attempts: %s", url, MAX_DELIVERY_ATTEMPTS, detail)

    def _write_outbox(self, alert: Alert, aoi: AOI, addresses: list[str]) -> Path:
        outbox = self.store_dir / "outbox"
        outbox.mkdir(parents=True, exist_ok=True)
        path = outbox / f"{alert.alert_id}.txt"
        body = (
            f"To: {', '.join(addresses)}\n"
            f"Subject: [riverwatch] {aoi.name} waste change {format_change(alert.relative_change)}\n"
            "\n"
            f"AOI: {alert.aoi_id} ({aoi.name})\n"
            f"Previous area: {alert.previous_area_m2:.1f} m2 (scene {alert.previous_scene_id})\n"
            f"Current area: {alert.current_area_m2:.1f} m2 (scene {alert.current_scene_id})\n"
            f"Relative change: {format_change(alert.relative_change)}\n"
        )
        path.write_text(body, encoding="utf-8")
        return path

    def drain(self) -> None:
        """Block until every queued alert delivery has finished."""
        self._queue.join()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.drain()
        self._queue.put(None)
        self._worker.join(timeout=10)

    def __enter__(self) -> "MonitorService":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
