"""Mock OSN HTTP service with plantable per-user ban flags.

Endpoints (all GET, JSON bodies)::

    /typeahead?q=PREFIX[&limit=N]        {"suggestions": [screen_name, ...]}
    /search?q=NAME                       {"users": [screen_name, ...]}
    /user/NAME/timeline?n=K[&since=TS]   {"tweets": [{"id", "kind", "status"}, ...]}
    /tweet/ID                            {"status", "author"}
    /tweet/ID/context                    {"id", "kind", "in_reply_to", "in_reply_to_author"}
    /users                               {"users": [screen_name, ...]}  (mock only)

``status`` is ``"ok"`` or ``"unavailable"``. Unknown users or tweets give 404.
Responses depend only on the scenario and the request.
"""

from __future__ import annotations

import bisect
import json
import socket
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO
from urllib.parse import parse_qs, unquote, urlsplit

from .graph import BanProfile, PopulationDataset
from .ingest import FORMAT_VERSION, DatasetError, iter_records, open_text

TWEET_KINDS = ("thread", "reply", "retweet")
DEFAULT_TYPEAHEAD_LIMIT = 10
SCENARIO_EPOCH = datetime(2020, 4, 1, tzinfo=timezone.utc)


def parse_time(ts: str | datetime) -> datetime:
    if isinstance(ts, datetime):
        dt = ts
    else:
        dt = datetime.fromisoformat(ts.replace("Z", "+00:00"))
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class SimTweet:
    id: int
    author: str
    kind: str
    posted: str
    in_reply_to: int | None = None

    def __post_init__(self):
        if self.kind not in TWEET_KINDS:
            raise ValueError(f"unknown tweet kind {self.kind!r}")
        if (self.kind == "thread") != (self.in_reply_to is None):
            raise ValueError(f"tweet {self.id}: replies and retweets need a referent, threads must not have one")


@dataclass
class SimUser:
    id: str
    screen_name: str
    bans: BanProfile = BanProfile()
    tweets: list[SimTweet] = field(default_factory=list)


class Scenario:
    def __init__(self, users: list[SimUser]):
        self.users = users
        self.by_name: dict[str, SimUser] = {}
        for u in users:
            key = u.screen_name.lower()
            if key in self.by_name:
                raise ValueError(f"duplicate screen_name {u.screen_name!r}")
            self.by_name[key] = u
        self.names = sorted(self.by_name)
        self.tweets: dict[int, SimTweet] = {}
        self.author_of: dict[str, SimUser] = {u.id: u for u in users}
        for u in users:
            u.tweets.sort(key=lambda t: (t.posted, t.id), reverse=True)
            for t in u.tweets:
                if t.id in self.tweets:
                    raise ValueError(f"duplicate tweet id {t.id}")
                self.tweets[t.id] = t

    def __len__(self) -> int:
        return len(self.users)

    def user_by_id(self, uid: str) -> SimUser:
        return self.author_of[uid]

    # -- endpoint logic -------------------------------------------------

    def typeahead(self, prefix: str, limit: int = DEFAULT_TYPEAHEAD_LIMIT) -> dict:
        p = prefix.lower()
        if not p:
            return {"suggestions": []}
        lo = bisect.bisect_left(self.names, p)
        hits = []
        for i in range(lo, len(self.names)):
            key = self.names[i]
            if not key.startswith(p):
                break
            u = self.by_name[key]
            if not u.bans.typeahead:
                hits.append(u)
        # exact match first, then shorter names, then alphabetical
        hits.sort(key=lambda u: (u.screen_name.lower() != p, len(u.screen_name), u.screen_name.lower()))
        return {"suggestions": [u.screen_name for u in hits[: max(0, limit)]]}

    def search(self, name: str) -> dict:
        u = self.by_name.get(name.lower())
        if u is None or u.bans.search:
            return {"users": []}
        return {"users": [u.screen_name]}

    def _status(self, t: SimTweet) -> str:
        return "unavailable" if self.author_of[t.author].bans.ghost else "ok"

    def timeline(self, name: str, n: int | None = None, since: str | None = None) -> dict | None:
        u = self.by_name.get(name.lower())
        if u is None:
            return None
        tweets = u.tweets
        if since is not None:
            cut = parse_time(since)
            tweets = [t for t in tweets if parse_time(t.posted) >= cut]
        if n is not None:
            tweets = tweets[: max(0, n)]
        return {"tweets": [{"id": t.id, "kind": t.kind, "status": self._status(t)} for t in tweets]}

    def tweet(self, tid: int) -> dict | None:
        t = self.tweets.get(tid)
        if t is None:
            return None
        return {"status": self._status(t), "author": self.author_of[t.author].screen_name}

    def tweet_context(self, tid: int) -> dict | None:
        t = self.tweets.get(tid)
        if t is None:
            return None
        ref_author = None
        if t.in_reply_to is not None and t.in_reply_to in self.tweets:
            ref_author = self.author_of[self.tweets[t.in_reply_to].author].screen_name
        return {"id": t.id, "kind": t.kind, "in_reply_to": t.in_reply_to, "in_reply_to_author": ref_author}

    def handle(self, target: str) -> tuple[int, dict]:
        """Route one request target (path + query) to (HTTP status, JSON body)."""
        parts = urlsplit(target)
        query = {k: v[-1] for k, v in parse_qs(parts.query, keep_blank_values=True).items()}
        segs = [unquote(s) for s in parts.path.split("/") if s]
        try:
            if segs == ["typeahead"]:
                return 200, self.typeahead(query.get("q", ""), int(query.get("limit", DEFAULT_TYPEAHEAD_LIMIT)))
            if segs == ["users"]:
                return 200, {"users": [u.screen_name for u in self.users]}
            if segs == ["search"]:
                return 200, self.search(query.get("q", ""))
            if len(segs) == 3 and segs[0] == "user" and segs[2] == "timeline":
                n = int(query["n"]) if "n" in query else None
                body = self.timeline(segs[1], n, query.get("since"))
                return (200, body) if body is not None else (404, {"error": "unknown user"})
            if len(segs) in (2, 3) and segs[0] == "tweet" and (len(segs) == 2 or segs[2] == "context"):
                tid = int(segs[1])
                body = self.tweet(tid) if len(segs) == 2 else self.tweet_context(tid)
                return (200, body) if body is not None else (404, {"error": "unknown tweet"})
        except ValueError as exc:
            return 400, {"error": str(exc)}
        return 404, {"error": "no such endpoint"}


def encode(body: dict) -> bytes:
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


# -- scenario construction and files --------------------------------------


def plant_scenario(d: PopulationDataset, epoch: datetime = SCENARIO_EPOCH) -> Scenario:
    """One SimUser per distinct node of ``d``, carrying its BanProfile.

    Each user posts a thread, then a reply or retweet towards every partner
    it points to in ``d`` (alternating), and always at least one reply and one
    retweet (to its own thread when it has no partner). Screen names are the
    node ids.
    """
    nodes = d.unique_nodes()
    partners: dict[str, list[str]] = {nid: [] for nid in nodes}
    for g in d.graphs:
        for a, b in g.edges:
            if b not in partners[a]:
                partners[a].append(b)

    thread_id = {nid: i + 1 for i, nid in enumerate(nodes)}
    next_id = len(nodes) + 1
    users = []
    for i, (nid, node) in enumerate(nodes.items()):
        t0 = epoch - timedelta(minutes=i)
        tweets = [SimTweet(thread_id[nid], nid, "thread", t0.isoformat())]
        refs = [thread_id[p] for p in partners[nid]]
        kinds = ["reply" if k % 2 == 0 else "retweet" for k in range(len(refs))]
        for kind in ("reply", "retweet"):
            if kind not in kinds:
                refs.append(thread_id[nid])
                kinds.append(kind)
        for k, (ref, kind) in enumerate(zip(refs, kinds)):
            # first partner gets the newest tweet
            posted = (t0 + timedelta(seconds=len(refs) - k)).isoformat()
            tweets.append(SimTweet(next_id, nid, kind, posted, ref))
            next_id += 1
        users.append(SimUser(nid, nid, node.bans, tweets))
    return Scenario(users)


def write_scenario(s: Scenario, fh: IO[str]) -> None:
    fh.write(json.dumps({"format_version": FORMAT_VERSION, "kind": "scenario", "users": len(s)}) + "\n")
    for u in s.users:
        rec = {
            "id": u.id,
            "screen_name": u.screen_name,
            "bans": u.bans.as_dict(),
            "tweets": [
                {"id": t.id, "kind": t.kind, "posted": t.posted, "in_reply_to": t.in_reply_to}
                for t in u.tweets
            ],
        }
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def save_scenario(s: Scenario, path) -> None:
    with open_text(path, "w") as fh:
        write_scenario(s, fh)


def read_scenario(fh: IO[str]) -> Scenario:
    records = iter_records(fh)
    try:
        lineno, head = next(records)
    except StopIteration:
        raise DatasetError("empty scenario file") from None
    if head.get("kind") != "scenario" or head.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"line {lineno}: not a scenario header")
    users = []
    for lineno, rec in records:
        try:
            tweets = [
                SimTweet(int(t["id"]), str(rec["id"]), t["kind"], t["posted"], t.get("in_reply_to"))
                for t in rec.get("tweets", [])
            ]
            users.append(SimUser(str(rec["id"]), str(rec["screen_name"]), BanProfile.from_dict(rec["bans"]), tweets))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {lineno}: bad user record: {exc}") from None
    try:
        return Scenario(users)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None


def load_scenario(path) -> Scenario:
    with open_text(path, "r") as fh:
        return read_scenario(fh)


# -- HTTP ------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    scenario: Scenario

    def setup(self):
        super().setup()
        # headers and body go out in separate writes; avoid Nagle stalls
        self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def do_GET(self):
        status, body = self.server.scenario.handle(self.path)
        data = encode(body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format, *args):
        pass


class MockOSNServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0):
        self.scenario = scenario
        super().__init__((host, port), _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


class running:
    """Context manager serving a scenario on a background thread."""

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0):
        self.server = MockOSNServer(scenario, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self) -> MockOSNServer:
        self.thread.start()
        return self.server

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()


def serve(scenario_path, port: int = 8080, host: str = "127.0.0.1") -> None:
    """Serve a scenario file until interrupted."""
    server = MockOSNServer(load_scenario(scenario_path), host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()

