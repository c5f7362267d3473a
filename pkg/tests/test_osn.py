import io
import socket

import pytest

from conftest import ego
from shadowban.detector import (
    OSNClient,
    OSNInteractionSource,
    TransportError,
    detect,
    detect_many,
    test_ghost as ghost_test,
    test_search as search_test,
    test_typeahead as typeahead_test,
)
from shadowban.graph import BanProfile, EgoGraph, Node, PopulationDataset
from shadowban.ingest import DatasetError
from shadowban.osnsim import SimTweet, SimUser, Scenario, plant_scenario, read_scenario, running, write_scenario
from shadowban.sampler import DictSource, UnknownUser, sample_ego

COMBOS = BanProfile.all_combinations()


def combo_dataset(n=16):
    nodes = [Node(f"user{i}", COMBOS[i % 8]) for i in range(n)]
    edges = [(f"user{i}", f"user{(i + 1) % n}") for i in range(n)]
    return PopulationDataset("X", [EgoGraph.build("user0", nodes, edges)])


@pytest.fixture(scope="module")
def server():
    d = combo_dataset()
    with running(plant_scenario(d)) as srv:
        yield srv, d


def test_scenario_endpoints():
    sc = plant_scenario(combo_dataset())
    assert sc.handle("/search?q=user1")[1] == {"users": ["user1"]}  # typeahead ban only
    assert sc.handle("/search?q=user2")[1] == {"users": []}
    assert sc.handle("/search?q=user0")[1] == {"users": ["user0"]}
    ta = sc.handle("/typeahead?q=user1")[1]["suggestions"]
    assert "user1" not in ta and "user10" in ta
    assert sc.handle("/typeahead?q=user0")[1]["suggestions"][0] == "user0"
    assert sc.handle("/user/nobody/timeline")[0] == 404
    assert sc.handle("/tweet/999999")[0] == 404
    assert sc.handle("/nope")[0] == 404
    assert sc.handle("/tweet/abc")[0] == 400
    status, body = sc.handle("/user/user4/timeline?n=2")
    assert status == 200 and len(body["tweets"]) == 2
    assert all(t["status"] == "unavailable" for t in body["tweets"])  # user4 is ghost banned


def test_search_flag_layout():
    # all_combinations enumerates bits (typeahead, search, ghost)
    assert COMBOS[1] == BanProfile(typeahead=True)
    assert COMBOS[2] == BanProfile(search=True)
    assert COMBOS[4] == BanProfile(ghost=True)


def test_timeline_since_filters():
    sc = plant_scenario(combo_dataset())
    all_t = sc.handle("/user/user3/timeline")[1]["tweets"]
    none = sc.handle("/user/user3/timeline?since=2030-01-01T00:00:00Z")[1]["tweets"]
    assert len(all_t) >= 3 and none == []


def test_scenario_file_roundtrip():
    sc = plant_scenario(combo_dataset())
    buf = io.StringIO()
    write_scenario(sc, buf)
    buf.seek(0)
    back = read_scenario(buf)
    for target in ["/typeahead?q=user", "/search?q=user7", "/user/user5/timeline", "/tweet/3", "/tweet/20/context", "/users"]:
        assert back.handle(target) == sc.handle(target)
    with pytest.raises(DatasetError):
        read_scenario(io.StringIO('{"format_version": 1, "kind": "dataset"}\n'))


def test_tweet_validation():
    with pytest.raises(ValueError):
        SimTweet(1, "a", "reply", "2020-01-01T00:00:00+00:00")
    with pytest.raises(ValueError):
        SimTweet(1, "a", "thread", "2020-01-01T00:00:00+00:00", in_reply_to=3)
    with pytest.raises(ValueError):
        Scenario([SimUser("a", "A"), SimUser("b", "a")])


def test_detect_recovers_all_combinations(server):
    srv, d = server
    truth = d.graphs[0].nodes
    for r in detect_many(srv.url, list(truth), workers=4):
        assert r.status == "complete"
        assert r.profile == truth[r.user].bans
        assert [e.test for e in r.evidence] == ["typeahead", "search", "ghost"]
        assert all(len(e.response_digest) == 64 for e in r.evidence)


def test_individual_tests_are_deterministic(server):
    srv, _ = server
    c = OSNClient(srv.url)
    assert typeahead_test(c, "user1")[0] is True
    assert search_test(c, "user2")[0] is True
    assert ghost_test(c, "user4")[0] is True
    a, b = ghost_test(c, "user3"), ghost_test(c, "user3")
    assert a == b and a[0] is False


def test_unknown_user(server):
    srv, _ = server
    r = detect_many(srv.url, ["nobody"])[0]
    assert r.status == "unknown" and not r.profile.banned


def test_inactive_user():
    sc = Scenario([SimUser("q", "quiet")])
    with running(sc) as srv:
        r = detect(srv.url, "quiet")
    assert r.status == "inactive"
    assert r.evidence[2].verdict is None
    assert not r.profile.ghost


def test_transport_failure_is_never_a_ban():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(TransportError):
        detect(f"http://127.0.0.1:{port}", "user1")
    r = detect_many(f"http://127.0.0.1:{port}", ["user1"])[0]
    assert r.status == "incomplete" and not r.profile.banned


def test_mock_backed_sampling_matches_direct_sampling():
    graphs = [ego("a", [("a", "b"), ("a", "c"), ("b", "c"), ("c", "d"), ("d", "e"), ("b", "a")], banned={"c"})]
    d = PopulationDataset("X", graphs)
    direct = sample_ego(DictSource.from_dataset(d), "a", fanout=5)
    with running(plant_scenario(d)) as srv:
        source = OSNInteractionSource(srv.url)
        via_mock = sample_ego(source, "a", fanout=5)
        with pytest.raises(UnknownUser):
            source.neighbors_of("nobody", 5)
    assert set(via_mock.nodes) == set(direct.nodes)
    assert set(via_mock.edges) == set(direct.edges)
