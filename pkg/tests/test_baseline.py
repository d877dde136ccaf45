import random
from datetime import date, timedelta

import pytest
from hypothesis import assume, given, settings, strategies as st

from attackwatch.baseline import (BurstConfig, KeywordSeries, baseline_events, burst_states, daily_series,
                                  default_keywords, intervals, kleinberg_bursts, parse_keywords, rates,
                                  series_from_csv)
from attackwatch.corpus import Document, TimeSlot

from kleinberg_reference import backward_states, exhaustive_states, to_intervals


@st.composite
def series(draw, min_days=1, max_days=25):
    n = draw(st.integers(min_days, max_days))
    totals = draw(st.lists(st.integers(1, 60), min_size=n, max_size=n))
    counts = [draw(st.integers(0, t)) for t in totals]
    return KeywordSeries("k", tuple(counts), tuple(totals))


class TestBursts:
    def test_flat(self):
        assert kleinberg_bursts(KeywordSeries("k", (5,) * 30, (100,) * 30)) == []

    def test_planted_20x(self):
        counts = [2] * 30
        for t in (10, 11, 12):
            counts[t] = 40
        [(a, b)] = kleinberg_bursts(KeywordSeries("k", tuple(counts), (200,) * 30))
        assert a <= 10 and b >= 12

    def test_single_day(self):
        out = kleinberg_bursts(KeywordSeries("k", (3,), (10,)))
        assert len(out) <= 1 and all(a == b == 0 for a, b in out)

    def test_all_zero(self):
        assert kleinberg_bursts(KeywordSeries("k", (0,) * 5, (10,) * 5)) == []

    def test_rate_cap(self):
        s = KeywordSeries("k", (9, 9, 1), (10, 10, 10))
        p0, p1 = rates(s, BurstConfig())
        assert p1 == 0.9999 and p0 < p1

    def test_saturated_series(self):
        assert kleinberg_bursts(KeywordSeries("k", (4, 4), (4, 4))) == []

    @pytest.mark.parametrize("kw", [{"s": 1.0}, {"gamma": 0.0}, {"Tb": 0}, {"max_rate": 1.0}])
    def test_config(self, kw):
        with pytest.raises(ValueError):
            BurstConfig(**kw)

    def test_series_validation(self):
        with pytest.raises(ValueError):
            KeywordSeries("k", (3,), (2,))
        with pytest.raises(ValueError):
            KeywordSeries("k", (1, 2), (3,))
        with pytest.raises(ValueError):
            KeywordSeries("k", (-1,), (3,))

    def test_matches_exhaustive_short(self):
        r = random.Random(0)
        for _ in range(200):
            n = r.randint(1, 10)
            totals = [r.randint(1, 40) for _ in range(n)]
            counts = [r.randint(0, t) for t in totals]
            if not any(counts):
                continue
            s = KeywordSeries("k", tuple(counts), tuple(totals))
            assert kleinberg_bursts(s) == to_intervals(exhaustive_states(counts, totals))

    @settings(max_examples=200, deadline=None)
    @given(series(), st.floats(0.1, 4.0), st.floats(1.2, 5.0))
    def test_matches_backward_reference(self, s, gamma, ratio):
        assume(any(s.counts))
        cfg = BurstConfig(s=ratio, gamma=gamma)
        assert burst_states(s, cfg) == backward_states(list(s.counts), list(s.totals), ratio, gamma)

    @settings(max_examples=200, deadline=None)
    @given(series())
    def test_intervals_disjoint_and_in_range(self, s):
        out = kleinberg_bursts(s)
        for (a, b), (c, d) in zip(out, out[1:]):
            assert b + 1 < c
        for a, b in out:
            assert 0 <= a <= b < len(s)

    @settings(max_examples=300, deadline=None)
    @given(series(min_days=2), st.floats(0.05, 3.0), st.floats(1.0, 4.0))
    def test_raising_gamma_never_adds_burst_entries(self, s, g, factor):
        lo = len(intervals(burst_states(s, BurstConfig(gamma=g))))
        hi = len(intervals(burst_states(s, BurstConfig(gamma=g * factor))))
        assert hi <= lo

    def test_burst_days_can_grow_with_gamma(self):
        # bridging two bursts into one costs days but saves an entry, so day counts are not monotone
        s = KeywordSeries("k", (0, 1, 1, 1, 4, 5, 26, 21, 0, 3, 26, 0, 0, 4),
                          (1, 25, 1, 26, 29, 19, 28, 25, 6, 3, 27, 9, 1, 22))
        lo = burst_states(s, BurstConfig(gamma=2.312341731462698))
        hi = burst_states(s, BurstConfig(gamma=5.811499816806436))
        assert sum(hi) > sum(lo) and len(intervals(hi)) <= len(intervals(lo))

    @settings(max_examples=200, deadline=None)
    @given(series(), st.integers(2, 6), st.floats(0.2, 3.0))
    def test_scaling_equals_gamma_rescale(self, s, k, gamma):
        scaled = KeywordSeries("k", tuple(c * k for c in s.counts), tuple(t * k for t in s.totals))
        assert rates(scaled, BurstConfig()) == pytest.approx(rates(s, BurstConfig()), rel=1e-12)
        assert burst_states(scaled, BurstConfig(gamma=gamma)) == burst_states(s, BurstConfig(gamma=gamma / k))


def bursting(n_keywords, days=20, burst_day=12):
    out = []
    for i in range(n_keywords):
        counts = [1] * days
        counts[burst_day] = 30
        out.append(KeywordSeries(f"kw{i:02d}", tuple(counts), (100,) * days))
    return out


class TestEvents:
    def test_none(self):
        assert baseline_events([KeywordSeries("k", (5,) * 10, (50,) * 10)]) == []
        assert baseline_events([]) == []

    def test_threshold_met(self):
        days = [date(2015, 1, 1) + timedelta(i) for i in range(20)]
        [ev] = baseline_events(bursting(36), BurstConfig(Tb=36), days)
        assert ev.date == days[12] and len(ev.keywords) == 36

    def test_threshold_missed(self):
        assert baseline_events(bursting(35), BurstConfig(Tb=36)) == []

    def test_strict(self):
        assert baseline_events(bursting(36), BurstConfig(Tb=36, strict=True)) == []
        assert len(baseline_events(bursting(37), BurstConfig(Tb=36, strict=True))) == 1

    def test_misaligned(self):
        with pytest.raises(ValueError):
            baseline_events([KeywordSeries("a", (1,), (2,)), KeywordSeries("b", (1, 1), (2, 2))])

    def test_json(self):
        [ev] = baseline_events(bursting(2), BurstConfig(Tb=2), [date(2015, 1, 1) + timedelta(i) for i in range(20)])
        j = ev.to_json("2015-01-13-B001")
        assert j["type"] is None and j["keywords"] == ["kw00", "kw01"] and j["date"] == "2015-01-13"


class TestInputs:
    def test_default_keywords(self):
        kws = default_keywords()
        assert 90 <= len(kws) <= 130 and "breach" in kws and len(set(kws)) == len(kws)

    def test_parse_keywords(self):
        assert parse_keywords("# list\nBreach\n\nddos\nbreach\n") == ["breach", "ddos"]

    def test_daily_series(self):
        d1 = (Document("a", 0.0, "", "data breach here"), Document("b", 1.0, "", "nothing"))
        d2 = (Document("c", 86400.0, "", "breach again"),)
        slots = [TimeSlot(date(1970, 1, 1), d1), TimeSlot(date(1970, 1, 2), d2)]
        days, s = daily_series(slots, ["breach", "ddos"])
        assert days == [date(1970, 1, 1), date(1970, 1, 2)]
        assert s[0].counts == (1, 1) and s[0].totals == (2, 1) and s[1].counts == (0, 0)

    def test_csv(self):
        text = "day,keyword,count,total\n2015-01-02,b,1,10\n2015-01-01,a,2,5\n2015-01-02,a,3,10\n"
        days, s = series_from_csv(text)
        assert days == [date(2015, 1, 1), date(2015, 1, 2)]
        assert [(x.keyword, x.counts, x.totals) for x in s] == [("a", (2, 3), (5, 10)), ("b", (0, 1), (5, 10))]

    def test_csv_errors(self):
        with pytest.raises(ValueError):
            series_from_csv("day,keyword\n")
        with pytest.raises(ValueError):
            series_from_csv("day,keyword,count,total\n2015-01-01,a,1,5\n2015-01-01,b,1,6\n")
