"""The instructor-facing HTTP surface the dashboard consumes: live
steering (start/stop attendance, launch surveys), live results, and the
analytics report.

Every endpoint except /api/v1/health requires the static bearer token.
Mutations are executed as slash commands from a synthetic API instructor
inside the guild, so HTTP-driven state and in-guild command state are the
same state by construction.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .app import BotApp
from .datastore import ingest_course_data
from .errors import ConfigInvalidError
from .ratelimit import LimiterConfig, RouteRule


@dataclass(frozen=True)
class ApiConfig:
    port: int
    auth_token: str
    data_dir: str
    course_data: str
    limiter: LimiterConfig | None = None
    host: str = "127.0.0.1"

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ConfigInvalidError(f"port {self.port} outside 1..65535")
        if not self.auth_token:
            raise ConfigInvalidError("auth_token must be non-empty when serving")


def load_api_config(path: str | Path, *, port: int | None = None,
                    data_dir: str | None = None,
                    auth_token: str | None = None) -> ApiConfig:
    """Read the main config file; explicit arguments win over the file."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    limiter = None
    if "limiter" in raw:
        block = raw["limiter"]
        limiter = LimiterConfig(
            routes=tuple(
                RouteRule(
                    method=r["method"],
                    route=r["route"],
                    capacity=r["capacity"],
                    window_seconds=r["window_seconds"],
                    alias=r.get("alias"),
                )
                for r in block.get("routes", [])
            ),
            global_capacity_per_second=block.get("global_capacity_per_second", 50),
            default_capacity=block.get("default_capacity", 5),
            default_window_seconds=block.get("default_window_seconds", 5.0),
            strict=block.get("strict", False),
        )
    return ApiConfig(
        port=port if port is not None else raw.get("port", 8400),
        auth_token=auth_token or raw.get("auth_token", ""),
        data_dir=data_dir or raw.get("data_dir", "data"),
        course_data=raw.get("course_data", "course.json"),
        limiter=limiter,
        host=raw.get("host", "127.0.0.1"),
    )


class StartAttendanceBody(BaseModel):
    activity_id: str
    keyword: str


class LaunchSurveyBody(BaseModel):
    activity_id: str | None = None


def create_api(bot: BotApp, auth_token: str) -> FastAPI:
    api = FastAPI(title="coursebot instructor API")
    api.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_token(request: Request) -> None:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {auth_token}":
            raise HTTPException(status_code=401, detail="missing or bad token")

    authed = Depends(require_token)

    @api.get("/api/v1/health")
    def health():
        return {"status": "ok"}

    @api.get("/api/v1/report", dependencies=[authed])
    def report():
        return bot.report_snapshot()

    @api.get("/api/v1/activities", dependencies=[authed])
    def activities():
        return bot.activities_snapshot()

    @api.get("/api/v1/attendance/sessions", dependencies=[authed])
    def list_sessions():
        return bot.attendance_snapshot()

    @api.get("/api/v1/attendance/sessions/{session_id}", dependencies=[authed])
    def get_session(session_id: str):
        found = bot.attendance_snapshot(session_id)
        if found is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return found

    @api.post(
        "/api/v1/attendance/sessions", status_code=201, dependencies=[authed]
    )
    def start_attendance(body: StartAttendanceBody):
        result = bot.execute_command(
            "attendance-start",
            {"keyword": body.keyword, "activity_id": body.activity_id},
        )
        if not result.ok:
            raise HTTPException(status_code=409, detail=_rejection_text(result))
        for session in bot.attendance_snapshot():
            if session["activity_id"] == body.activity_id and session["state"] == "OPEN":
                return session
        raise HTTPException(status_code=500, detail="session not found after start")

    @api.post(
        "/api/v1/attendance/sessions/{session_id}/stop", dependencies=[authed]
    )
    def stop_attendance(session_id: str):
        found = bot.attendance_snapshot(session_id)
        if found is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if found["state"] != "OPEN":
            raise HTTPException(status_code=409, detail="session already closed")
        result = bot.execute_command(
            "attendance-stop", {"activity_id": found["activity_id"]}
        )
        if not result.ok:
            raise HTTPException(status_code=409, detail=_rejection_text(result))
        return bot.attendance_snapshot(session_id)

    @api.get("/api/v1/surveys/{survey_id}/results", dependencies=[authed])
    def survey_results(survey_id: str):
        try:
            return bot.survey_snapshot(survey_id)
        except Exception:
            raise HTTPException(status_code=404, detail="unknown survey")

    @api.post("/api/v1/surveys/{survey_id}/launch", dependencies=[authed])
    def launch_survey(survey_id: str, body: LaunchSurveyBody | None = None):
        activity_id = (
            body.activity_id if body and body.activity_id
            else survey_id.removesuffix("-survey")
        )
        result = bot.execute_command("survey-launch", {"activity_id": activity_id})
        if not result.ok:
            raise HTTPException(status_code=409, detail=_rejection_text(result))
        return bot.survey_snapshot(survey_id)

    @api.get("/api/v1/live", dependencies=[authed])
    def live(
        since: int = Query(0, ge=0),
        timeout: float = Query(25.0, ge=0.0, le=60.0),
    ):
        events = bot.wait_changes(since, timeout)
        cursor = events[-1].seq if events else since
        return {"cursor": cursor, "events": [e.as_dict() for e in events]}

    @api.on_event("shutdown")
    def flush_on_shutdown():
        bot.shutdown()

    return api


def _rejection_text(result) -> str:
    for action in result.actions:
        text = getattr(action, "text", None)
        if text:
            return text
    return "rejected"


class WallClockPump(threading.Thread):
    """Advances the bot's virtual clock to wall time while serving, so
    calendar triggers fire in real time."""

    def __init__(self, bot: BotApp, interval: float = 0.5):
        super().__init__(daemon=True)
        self.bot = bot
        self.interval = interval
        self._stop = threading.Event()

    def run(self):
        while not self._stop.is_set():
            now = datetime.now(timezone.utc)
            if now > self.bot.now():
                self.bot.advance_time(now)
            self._stop.wait(self.interval)

    def stop(self):
        self._stop.set()


def serve(config: ApiConfig) -> None:
    """Run the bot plus HTTP listener until interrupted."""
    import uvicorn

    course = ingest_course_data(
        Path(config.course_data).read_text(encoding="utf-8")
    )
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    bot = BotApp(
        course,
        data_dir,
        limiter_config=config.limiter,
        start_time=datetime.now(timezone.utc),
    )
    api = create_api(bot, config.auth_token)
    pump = WallClockPump(bot)
    pump.start()
    try:
        uvicorn.run(api, host=config.host, port=config.port, log_level="info")
    finally:
        pump.stop()
        bot.shutdown()
