import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scan_cases import instances, near_misses
from thingpot import logstore
from thingpot.analyzer import (
    AsnMap, Label, ReportOptions, TorExitList, aggregate_user_agents, classify, enrich_ip, is_http,
    load_registry, match_signatures, percent, report, top_n,
)
from thingpot.analyzer.payloads import fingerprint_payload, payload_repr
from thingpot.analyzer.report import Tally, to_json, to_tsv
from thingpot.analyzer.signatures import URL_SCAN_TEMPLATES, Category, RegistryError, builtin_signatures
from thingpot.golden import load_fixture
from thingpot.logstore import RequestRecord

REGISTRY = builtin_signatures()
URL_SCAN_TAGS = sorted(URL_SCAN_TEMPLATES)

GH0ST = (b"Gh0st\xad\x00\x00\x00\xe0\x00\x00\x00x\x9cKS``\x98\xc3\xc0\xc0\xc0\x06\xc4\x8c@\xbcQ\x96\x81\x81"
         b"\tH\x07\xa7\x16\x95e&\xa7*\x04$&g+\x182\x94\xf6\xb000\xac\xa8rc\x00\x01\x11\xa0\x82\x1f\\`&\x83\xc7K7")

# leading bytes of the ten most common non-HTTP captures, with hand-derived verdicts:
# only a request line of METHOD SP target SP "HTTP/" digit "." digit counts as HTTP
NON_HTTP_ORACLE = [
    (b"@\x00\x00\x00B\xa4", False),
    (b"OPTIONS / RTSP/1.0", False),
    (GH0ST, False),
    (b"\x04\x01\x00P\xc0c\xf660\x00", False),
    (b"OPTIONS / HTTP/1.0", True),
    (b"USER test +iw test :Test Wuz Here", False),
    (b"@\x00\x00\x00\x00Z\xe6\xca\"BX\x1c\x86-\x9b\xb0#\xb2N\xf6(\x13o\xf5", False),
    (b"FOO /FOO-sfi9876 HTTP/1.1", True),
    (b"", False),
    (b"\x05\x02\x00\x02", False),
]


def http(method, url, ua="-", body=b"", ip="10.0.0.1", referer=None, shared_id=None):
    return RequestRecord(
        ts=0, node="n", src_ip=ip, src_port=1, method=method, url=url, http_version="1.1",
        user_agent=ua, referer=referer, body_b64=logstore.b64(body), shared_id=shared_id,
    )


def raw(data, ip="10.0.0.9"):
    return RequestRecord(ts=0, node="n", src_ip=ip, src_port=1, method=None, url=None, http_version=None,
                         body_b64=logstore.b64(data), valid_http=False)


@pytest.mark.parametrize("data,expected", NON_HTTP_ORACLE)
def test_is_http_prefix_oracle(data, expected):
    assert is_http(data) is expected


@pytest.mark.parametrize("data,kind", [
    (GH0ST, "gh0st-rat"),
    (b"\x04\x01\x00P\xc0c\xf660\x00", "socks4"),
    (b"\x05\x02\x00\x02", "socks5"),
    (b"OPTIONS / RTSP/1.0", "rtsp"),
    (b"USER test +iw test :Test Wuz Here", "irc"),
    (b"", "empty"),
    (b"@\x00\x00\x00B\xa4", "unknown"),
])
def test_fingerprint_payload(data, kind):
    assert fingerprint_payload(data) == kind


def test_payload_repr_escapes():
    assert payload_repr(b"@\x00\x00\x00B\xa4") == '"@\\x00\\x00\\x00B\\xA4"'
    assert payload_repr(b"") == '""'
    assert payload_repr(b"a" * 70).endswith('..."')


@pytest.mark.parametrize("record,label", [
    (http("POST", "/api/", "shooter"), Label.TARGETED),
    (http("HEAD", "/phpmyadmin/", "Mozilla/5.0 Jorgee"), Label.UNTARGETED),
    (http("GET", "/", "-"), Label.UNDEFINED),
    (http("POST", "/upload", body=b"philips hue"), Label.TARGETED),
    (http("GET", "/", "Mozilla/5.00 (Nikto/2.1.5)"), Label.UNTARGETED),
    (http("GET", "http://x.pl/testproxy.php"), Label.UNTARGETED),
    (raw(GH0ST), Label.UNDEFINED),
])
def test_classify(record, label):
    assert classify(record) is label


def test_golden_fixtures_tagged_exactly():
    assert match_signatures(load_fixture("shooter_sample"), REGISTRY) == ["shooter-control"]
    assert match_signatures(load_fixture("botlight_sample"), REGISTRY) == ["multipart-fuzz"]


def test_golden_fixtures_are_targeted():
    for name in ("shooter_sample", "botlight_sample"):
        assert classify(load_fixture(name)) is Label.TARGETED


def test_ioscan_example():
    assert match_signatures(http("GET", "/api/hue/42"), REGISTRY) == ["url-scan-07"]


def test_shooter_rejects_foreign_keys():
    assert "shooter-control" not in match_signatures(http("POST", "/api/", body=b'{"devicetype":"x"}'), REGISTRY)


def test_non_http_never_tagged():
    assert match_signatures(raw(b"POST /api/ HTTP/1.1"), REGISTRY) == []


@pytest.mark.parametrize("tag", URL_SCAN_TAGS)
def test_url_scan_instances_and_near_misses(tag):
    url_scan = [s for s in REGISTRY if s.category is Category.URL_SCAN]
    for url in instances(tag, 1000, seed=11):
        assert [s.tag for s in url_scan if s.matches(http("GET", url))] == [tag], url
    for url in near_misses(tag, 300, seed=11):
        assert [s.tag for s in url_scan if s.matches(http("GET", url))] == [], url


def test_url_scan_range_edges():
    sig = next(s for s in REGISTRY if s.tag == "url-scan-07")
    assert all(sig.matches(http("GET", f"/api/hue/{i}")) for i in range(751))
    assert not sig.matches(http("GET", "/api/hue/751"))
    assert not sig.matches(http("GET", "/api/hue/042"))


def test_jorgee_scan_tag():
    assert match_signatures(http("HEAD", "/phpMyAdmin2016/", "Mozilla/5.0 Jorgee"), REGISTRY) == ["jorgee-admin-scan"]
    assert "jorgee-admin-scan" not in match_signatures(http("HEAD", "/index.html"), REGISTRY)


def test_scanner_uas():
    assert match_signatures(http("FOO", "/FOO-sfi9876", "Mozilla/5.0 SF/2.10b"), REGISTRY) == ["skipfish-ua"]
    assert "proxy-probe" in match_signatures(http("GET", "http://a.b/testproxy.php"), REGISTRY)


def test_registry_from_file(tmp_path):
    path = tmp_path / "sigs.json"
    path.write_text(json.dumps([{"tag": "my-tag", "methods": ["get"], "url_pattern": "^/secret"}]))
    reg = load_registry(path)
    assert match_signatures(http("GET", "/secret/x"), reg) == ["my-tag"]


@pytest.mark.parametrize("entries,needle", [
    ([{"tag": "ok", "url_pattern": "["}], "entry 0 ('ok')"),
    ([{"tag": "a"}, {"tag": "b", "category": "Nope"}], "entry 1 ('b')"),
    ([{"url_pattern": "x"}], "entry 0"),
    ([{"tag": "shooter-control"}], "duplicate"),
    ([{"tag": "x", "bogus": 1}], "unknown keys"),
    ({"tag": "x"}, "list"),
])
def test_registry_errors_name_entry(tmp_path, entries, needle):
    path = tmp_path / "sigs.json"
    path.write_text(json.dumps(entries))
    with pytest.raises(RegistryError, match=None) as info:
        load_registry(path)
    assert needle in str(info.value)


@settings(max_examples=50, deadline=None)
@given(perm=st.permutations(range(len(REGISTRY))), pick=st.integers(0, 7))
def test_signature_order_independent(perm, pick):
    samples = [
        load_fixture("shooter_sample"), load_fixture("botlight_sample"), http("GET", "/api/hue/42", "ioscan"),
        http("HEAD", "/sqlweb/", "Mozilla/5.0 Jorgee"), http("GET", "/", "Python-urllib/2.7"),
        http("GET", "/api/" + "a" * 32, "httpget"), http("PUT", "/x", "Mozilla/5.0 SF/2.10b"), raw(b"x"),
    ]
    rec = samples[pick]
    assert match_signatures(rec, [REGISTRY[i] for i in perm]) == match_signatures(rec, REGISTRY)


def test_aggregate_user_agents_counts():
    rows = aggregate_user_agents([
        http("POST", "/api/", "shooter", ip="1.1.1.1"), http("POST", "/api/", "shooter", ip="1.1.1.1"),
        http("POST", "/api/", "shooter", ip="2.2.2.2"),
    ])
    assert [(r.user_agent, r.count, r.methods, r.ips) for r in rows] == [("shooter", 3, {"POST": 3}, 2)]


def test_aggregate_user_agents_ties_and_empty():
    assert aggregate_user_agents([]) == []
    rows = aggregate_user_agents([http("GET", "/", "b"), http("GET", "/", "a"), http("GET", "/", "c"),
                                  http("GET", "/", "c")])
    assert [r.user_agent for r in rows] == ["c", "a", "b"]


def test_enrich_ip(tmp_path):
    tor_file = tmp_path / "tor.txt"
    tor_file.write_text("# exits\n104.223.123.98\nnot-an-ip\n")
    tor = TorExitList.load(tor_file)
    assert tor.skipped == 1
    assert enrich_ip("104.223.123.98", tor, None)["tor"] is True
    assert enrich_ip("196.54.55.13", tor, None)["tor"] is False
    assert enrich_ip("196.54.55.13", None, None) == {"tor": False, "asn": None, "rir": None}
    assert enrich_ip("196.54.55.13", TorExitList(), AsnMap()) == {"tor": False, "asn": None, "rir": None}


def test_asn_longest_prefix(tmp_path):
    path = tmp_path / "asn.csv"
    path.write_text("cidr,asn,rir\n196.0.0.0/8,AS1,AFRINIC\n196.54.0.0/16,AS2,AFRINIC\nbad,row\n"
                    "2001:db8::/32,AS3,RIPE\n")
    asn = AsnMap.load(path)
    assert asn.skipped == 1
    assert asn.lookup("196.54.55.13") == ("AS2", "AFRINIC")
    assert asn.lookup("196.1.1.1") == ("AS1", "AFRINIC")
    assert asn.lookup("2001:db8::1") == ("AS3", "RIPE")
    assert asn.lookup("8.8.8.8") == (None, None)


def test_top_n():
    recs = [http("GET", "/api/")] * 5 + [http("GET", "/b")] * 2 + [http("GET", "/a")] * 2 + [raw(b"\x05\x02\x00\x02")]
    assert top_n(recs, "url", 2) == [("/api/", 5), ("/a", 2)]
    assert top_n(recs, "url", 50) == [("/api/", 5), ("/a", 2), ("/b", 2)]
    assert top_n(recs, "non_http_payload", 5) == [('"\\x05\\x02\\x00\\x02"', 1)]
    with pytest.raises(ValueError, match="unknown field"):
        top_n(recs, "cookie", 3)


@pytest.mark.parametrize("count,total,expected", [
    (10444, 113741, 9.2), (56000, 113741, 49.2), (48705, 113465, 42.9), (64760, 113465, 57.1),
    (1, 8, 12.5), (1, 16, 6.3), (3, 16, 18.8), (0, 5, 0.0), (5, 0, 0.0),
])
def test_percent_half_up(count, total, expected):
    assert percent(count, total) == expected


def test_percent_targeted_share_value():
    # 47297/113741 = 41.583...%, which half-up rounding renders as 41.6
    assert percent(47297, 113741) == 41.6


def corpus():
    recs = [http("POST", "/api/", "shooter", b'{"on":true}', ip="104.223.123.98")] * 4
    recs += [http("HEAD", "/phpmyadmin/", "Mozilla/5.0 Jorgee", ip="196.54.55.13")] * 3
    recs += [http("GET", "/", referer="http://x/")] * 2 + [raw(GH0ST)]
    return recs


def test_report_layout_and_invariants():
    doc = report(corpus(), ReportOptions(top=5))
    assert doc["records"] == 10
    assert sum(v["count"] for v in doc["labels"].values()) == 10
    assert sum(v["count"] for v in doc["api_split"].values()) == 9
    assert doc["top_urls"][0] == {"url": "/api/", "count": 4}
    assert doc["signatures"][0] == {"tag": "shooter-control", "category": "TargetedControl", "count": 4}
    assert doc["non_http_payloads"][0]["fingerprint"] == "gh0st-rat"
    assert doc["top_referers"] == [{"referer": "http://x/", "count": 2}]
    assert "correlation" not in doc
    assert to_json(doc) == to_json(report(corpus(), ReportOptions(top=5)))
    assert "# labels" in to_tsv(doc)


def test_report_correlation_section():
    recs = [http("GET", "/api/x", shared_id="s1")]
    events = [logstore.XmppEvent(1, "in", "chat", "b@x", "u@x", "on", "s1")]
    doc = report(recs + events)
    assert doc["correlation"] == {"sessions": 1, "rest_orphans": 0, "xmpp_orphans": 0}
    assert doc["records"] == 1


def test_tally_merge_associative():
    recs = corpus() * 3
    random.Random(1).shuffle(recs)
    opts = ReportOptions()

    def tally(chunk):
        t = Tally()
        for r in chunk:
            t.add(r, REGISTRY, opts.rules)
        return t

    a, b, c = tally(recs[:7]), tally(recs[7:19]), tally(recs[19:])
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    whole = tally(recs)
    for t in (left, right):
        assert t.labels == whole.labels and t.signatures == whole.signatures and t.records == whole.records
        assert t.fields == whole.fields and t.user_agent_rows() == whole.user_agent_rows()


record_strategy = st.one_of(
    st.builds(http, method=st.sampled_from(["GET", "POST", "HEAD", "PUT", "FOO"]),
              url=st.one_of(st.text(max_size=30), st.text(max_size=20).map(lambda s: "/api" + s)),
              ua=st.sampled_from(["-", "shooter", "Mozilla/5.0 Jorgee", "Python-urllib/2.7", "x"]),
              body=st.binary(max_size=30)),
    st.builds(raw, st.binary(max_size=30)),
)


@settings(max_examples=200, deadline=None)
@given(recs=st.lists(record_strategy, max_size=40))
def test_partition_and_api_split_invariants(recs):
    doc = report(recs)
    assert sum(v["count"] for v in doc["labels"].values()) == len(recs)
    assert sum(v["count"] for v in doc["api_split"].values()) == sum(r.valid_http for r in recs)
    for r in recs:
        if r.valid_http and r.url.startswith("/api"):
            assert classify(r) is Label.TARGETED


def test_label_counter_matches_classify():
    recs = corpus()
    counts = Counter(classify(r).value for r in recs)
    doc = report(recs)
    assert {k: v["count"] for k, v in doc["labels"].items() if v["count"]} == dict(counts)
