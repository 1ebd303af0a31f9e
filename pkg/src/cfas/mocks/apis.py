"""Mock external classifier APIs: the bot-verdict service and the video
metadata service, both driven by fixture tables."""

from __future__ import annotations

from typing import Optional

from ..httpserver import HttpService, Request, Response, Router


class MockExternalApis:
    def __init__(
        self,
        bot_table: Optional[dict[str, bool]] = None,
        video_table: Optional[dict[str, dict]] = None,
    ):
        self.bot_table = dict(bot_table or {"bot_eve": True, "alice": False, "eve": False})
        self.video_table = dict(
            video_table
            or {
                "v123": {"title": "Peppa Pig FUNNY", "tags": ["kids"], "like_count": 10},
                "v666": {
                    "title": "Peppa Pig buried alive",
                    "tags": ["kids", "scary"],
                    "like_count": 3,
                },
            }
        )

    def router(self) -> Router:
        router = Router()

        def botcheck(req: Request) -> Response:
            user = req.query.get("user", "")
            return Response(200, {"bot": bool(self.bot_table.get(user, False))})

        def video(req: Request) -> Response:
            features = self.video_table.get(req.params["video_id"])
            if features is None:
                return Response(404, {"error": "unknown video"})
            return Response(200, features)

        router.add("GET", "/botcheck", botcheck)
        router.add("GET", "/video/{video_id}", video)
        router.add("GET", "/health", lambda req: Response(200, {"status": "ok", "service": "mock-apis"}))
        return router


class MockApiService:
    def __init__(self, apis: Optional[MockExternalApis] = None, host: str = "127.0.0.1", port: int = 0):
        self.apis = apis or MockExternalApis()
        self.http = HttpService(self.apis.router(), host, port)

    def start(self) -> "MockApiService":
        self.http.start()
        return self

    def stop(self) -> None:
        self.http.stop()

    @property
    def base_url(self) -> str:
        return self.http.base_url
