"""Property tests for the invariants each module promises."""

import itertools
from datetime import date, datetime, timedelta, timezone

import httpx
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from alivepub.enrich import FixtureProvider, VisitCounts, check_link, fetch_bookmark_count, fetch_visit_counts
from alivepub.errors import NameParseError, RateLimited
from alivepub.ledger import PromotionPolicy, VersionLedger
from alivepub.marker import (
    MetaBlock,
    embed_meta,
    extract_meta,
    format_marker,
    refresh_with_report,
    scan_document,
    scan_living_dates,
)
from alivepub.model import (
    EnrichmentReport,
    Kind,
    MetaAttributes,
    ResolvePolicy,
    Style,
    Track,
    format_versioned_name,
    parse_versioned_name,
)
from alivepub.render import render_intext, render_reference
from alivepub.store import IndirectionTable, RecordStore, UsageCounters

from strategies import base_ids, meta_attributes, text, versioned_names

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
_ids = itertools.count()


# -- names ----------------------------------------------------------------------------


@given(versioned_names)
def test_parse_format_identity(name):
    s = format_versioned_name(name)
    assert parse_versioned_name(s) == name
    assert "≈" not in s and not any(c.isspace() for c in s)


@given(st.text(max_size=20) | st.builds(lambda b, n: f"{b}v{n}", st.text(max_size=8), st.integers(0, 200)))
def test_format_parse_identity_on_valid_strings(s):
    try:
        name = parse_versioned_name(s)
    except NameParseError:
        return
    assert format_versioned_name(name) == s


# -- ledger state machine ---------------------------------------------------------------


class LedgerMachine(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.now = T0
        self.ledger = VersionLedger(RecordStore(), lambda: self.now)
        self.policy = PromotionPolicy(90)

    @rule(pid=st.sampled_from(["a", "b"]), track=st.sampled_from(list(Track)), hours=st.integers(0, 2000))
    def publish(self, pid, track, hours):
        self.now += timedelta(hours=hours)
        self.ledger.publish_revision(pid, f"{pid}@{self.now}".encode(), track=track)

    @precondition(lambda self: self.ledger.exists("a"))
    @rule(data=st.data())
    def promote(self, data):
        authors = [r.version for r in self.ledger.revisions("a") if r.track == Track.AUTHOR]
        assume(authors)
        try:
            self.ledger.promote("a", data.draw(st.sampled_from(authors)), self.policy)
        except RateLimited:
            pass

    @precondition(lambda self: self.ledger.exists("b"))
    @rule()
    def retract(self):
        self.ledger.retract("b", "test")

    @invariant()
    def gapless_and_resolvable(self):
        for pid in self.ledger.ids():
            revs = self.ledger.revisions(pid)
            assert [r.version for r in revs] == list(range(1, len(revs) + 1))
            latest = self.ledger.resolve(pid)
            assert latest.version == max(r.version for r in revs)
            official = [r for r in revs if r.track == Track.OFFICIAL]
            if official:
                assert self.ledger.resolve(pid, ResolvePolicy.LATEST_OFFICIAL).track == Track.OFFICIAL
            assert not self.ledger.check_for_updates(f"{pid}v{latest.version}", ResolvePolicy.LATEST_ANY).newer_exists
            assert not self.ledger.check_for_updates(pid).newer_exists
            stamps = [r.timestamp for r in revs]
            assert stamps == sorted(stamps)


LedgerMachine.TestCase.settings = settings(max_examples=40, stateful_step_count=25, deadline=None)
test_ledger_machine = LedgerMachine.TestCase


# -- meta blocks and markers --------------------------------------------------------------


@given(meta_attributes(), st.sampled_from(["", "<html><head>\n<title>x</title></head>", "body ≈2021-03-18≈"]))
def test_embed_extract_round_trip(meta, doc):
    out = embed_meta(doc, meta)
    assert extract_meta(out) == meta
    assert len(scan_living_dates(out)) == len(scan_living_dates(doc))


@given(st.lists(st.tuples(st.from_regex(r"\A[A-Za-z_][A-Za-z0-9_.\-]{0,10}\Z"), text), unique_by=lambda kv: kv[0]))
def test_meta_block_never_holds_a_marker_or_closes_early(pairs):
    block = MetaBlock(pairs).serialize()
    assert "≈" not in block
    assert block.count("-->") == 1


segments = st.lists(
    st.one_of(
        st.tuples(st.just("text"), st.text(alphabet="ab≈-0123456789 \n", max_size=12)),
        st.tuples(st.just("marker"), st.dates(min_value=date(1000, 1, 1))),
    ),
    max_size=8,
)


@given(segments, st.dictionaries(st.integers(0, 8), st.sampled_from(["p", "q", "gone"])),
       st.dates(min_value=date(1000, 1, 1)), st.dates(min_value=date(1000, 1, 1)))
def test_refresh_touches_only_markers_and_is_idempotent(parts, bindings, p_date, q_date):
    doc = "".join(v if kind == "text" else format_marker(v) for kind, v in parts)
    current = {"p": p_date, "q": q_date}

    def reader(target):
        from alivepub.errors import UnknownPublication
        if target not in current:
            raise UnknownPublication(target)
        return current[target]

    before = scan_document(doc, bindings).markers
    result = refresh_with_report(doc, bindings, reader)
    after = scan_document(result.text, bindings).markers
    assert len(before) == len(after)
    # span-masked comparison: the text between markers is unchanged
    cuts_a = [0] + [x for m in before for x in m.span] + [len(doc)]
    cuts_b = [0] + [x for m in after for x in m.span] + [len(result.text)]
    gaps_a = [doc[cuts_a[i]:cuts_a[i + 1]] for i in range(0, len(cuts_a), 2)]
    gaps_b = [result.text[cuts_b[i]:cuts_b[i + 1]] for i in range(0, len(cuts_b), 2)]
    assert gaps_a == gaps_b
    for i, (old, new) in enumerate(zip(before, after)):
        target = bindings.get(i)
        expected = current[target] if target in current else old.date
        assert new.date == expected
    assert refresh_with_report(result.text, bindings, reader).text == result.text


@given(st.text(alphabet="≈0123456789-x", max_size=30))
def test_scan_accepts_exactly_the_grammar(s):
    res = scan_document(s)
    for m in res.markers:
        assert s[m.span[0]:m.span[1]] == format_marker(m.date)
    for bad in res.malformed:
        with pytest.raises(ValueError):
            date.fromisoformat(bad.text.strip("≈"))


# -- rendering ------------------------------------------------------------------------------


@given(meta_attributes().filter(lambda m: m.title and m.authors), st.sampled_from(list(Style)))
def test_alive_target_renders_exactly_one_marker(meta, style):
    r = render_reference(meta, EnrichmentReport(T0), style)
    markers = scan_living_dates(r.plain_text)
    if meta.last_revision_date is None:
        assert markers == []
    else:
        assert [m.date for m in markers] == [meta.last_revision_date]
    assert r == render_reference(meta, EnrichmentReport(T0), style)  # pure


@given(st.integers(1, 999))
def test_vancouver_intext_ignores_liveness(n):
    assert render_intext(Style.VANCOUVER, "A", 2000, date(2021, 1, 1), n) == render_intext(Style.VANCOUVER, number=n)


# -- enrichment ------------------------------------------------------------------------------


@given(st.integers(100, 599), st.integers(100, 599))
def test_check_link_never_ok_outside_2xx(first, second):
    def handler(request):
        if request.url.path == "/start":
            return httpx.Response(first, headers={"location": "/next"} if 300 <= first < 400 else {})
        return httpx.Response(second)

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        status = check_link("http://fixture.test/start", client, timeout=5)
    assert (status.state == "ok") == (200 <= first < 300)
    if status.state == "redirect":
        assert 300 <= first < 400 and 200 <= second < 300


@given(st.lists(st.integers(0, 400), max_size=40), st.integers(0, 400))
def test_visit_window_never_exceeds_total(offsets, now_offset):
    usage = UsageCounters(RecordStore())
    for d in offsets:
        usage.record_visit("p", T0 + timedelta(days=d))
    counts = fetch_visit_counts("p", usage, T0 + timedelta(days=now_offset))
    assert isinstance(counts, VisitCounts)
    assert 0 <= counts.last_30_days <= counts.total == len(offsets)


@given(st.lists(st.tuples(st.integers(0, 10**6), st.booleans()), min_size=1, max_size=6))
def test_bookmark_sum_of_successes(answers):
    providers = [FixtureProvider(f"b{i}", {Kind.BOOKMARK_COUNT: {"p": v}}, down=down)
                 for i, (v, down) in enumerate(answers)]
    ok = [v for v, down in answers if not down]
    if not ok:
        return
    assert fetch_bookmark_count("p", providers) == sum(ok)


# -- storage ------------------------------------------------------------------------------------


@settings(max_examples=60)
@given(st.lists(st.integers(-400, 400), min_size=1, max_size=10))
def test_indirection_history_ordered(jumps):
    now = [T0]
    table = IndirectionTable(RecordStore(), lambda: now[0])
    table.put("p", "https://a.example/0")
    for i, j in enumerate(jumps):
        now[0] = now[0] + timedelta(hours=j)
        table.remap("p", f"https://a.example/{i + 1}")
    hist = table.get("p").remap_history
    assert len(hist) == len(jumps) + 1
    assert [h["changed_at"] for h in hist] == sorted(h["changed_at"] for h in hist)


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture], deadline=None)
@given(meta_attributes())
def test_ledger_records_survive_reopen(tmp_path, meta):
    path = tmp_path / "s"
    ledger = VersionLedger(RecordStore(path, durable=False))
    pid = f"p{next(_ids)}"
    clean = meta.with_changes(retracted=False, last_revision_date=None, first_online_year=None)
    rec = ledger.publish_revision(pid, b"x", meta=clean, at=T0)
    again = VersionLedger(RecordStore(path, durable=False))
    assert again.revisions(pid)[-1] == rec
    assert again.meta(pid) == ledger.meta(pid)
