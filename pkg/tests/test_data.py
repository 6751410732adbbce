import numpy as np
import pytest

from adsr.data import (
    InteractionEvent,
    batch_iterator,
    build_split,
    content_hash,
    filter_min_interactions,
    load_cache,
    load_movielens,
    load_tmall,
    save_cache,
    split_and_window,
    subsample_users,
)
from adsr.errors import ConfigError, DataError, ParseError
from adsr.rng import RngState
from adsr.synthetic import planted_events


def ev(user, item, ts, attrs):
    return InteractionEvent(user, item, float(ts), frozenset(attrs))


def user_sequence(user, items, t0=0):
    return [ev(user, it, t0 + k, [f"a{it % 3}"]) for k, it in enumerate(items)]


# -- movielens loader --------------------------------------------------------


@pytest.fixture
def ml_fixture(tmp_path):
    movies = tmp_path / "movies.dat"
    movies.write_text(
        "1::Toy Story (1995)::Animation|Children's|Comedy\n"
        "2::Jumanji (1995)::Adventure|Children's|Fantasy\n"
        "3::Heat (1995)::Action|Crime|Thriller\n",
        encoding="latin-1",
    )
    ratings = tmp_path / "ratings.dat"
    ratings.write_text(
        "1::1::5::978300760\n"
        "1::2::3::978300700\n"
        "2::3::4::978301000\n"
        "2::1::4::978301000\n",
        encoding="latin-1",
    )
    return ratings, movies


def test_load_movielens_parses_and_sorts(ml_fixture):
    events = load_movielens(*ml_fixture)
    assert len(events) == 4
    # user 1 sorted by timestamp: item 2 (ts ...700) before item 1
    assert [e.item_id for e in events[:2]] == [2, 1]
    assert events[1].attributes == frozenset({"Animation", "Children's", "Comedy"})
    # user 2 ties on timestamp keep file order: 3 then 1
    assert [e.item_id for e in events[2:]] == [3, 1]


def test_load_movielens_line_fields(ml_fixture):
    events = load_movielens(*ml_fixture)
    first_user1 = [e for e in events if e.user_id == 1][1]
    assert first_user1.item_id == 1
    assert first_user1.timestamp == 978300760.0


def test_load_movielens_malformed_line(tmp_path, ml_fixture):
    ratings, movies = ml_fixture
    bad = tmp_path / "bad.dat"
    bad.write_text("1::1::5::978300760\n1::2::oops\n", encoding="latin-1")
    with pytest.raises(ParseError, match=":2"):
        load_movielens(bad, movies)


def test_load_movielens_missing_genre_row(tmp_path, ml_fixture):
    ratings, movies = ml_fixture
    orphan = tmp_path / "orphan.dat"
    orphan.write_text("1::999::5::978300760\n", encoding="latin-1")
    with pytest.raises(DataError, match="999"):
        load_movielens(orphan, movies)


# -- tmall loader ------------------------------------------------------------


def test_load_tmall_filters_actions(tmp_path):
    f = tmp_path / "tmall.csv"
    f.write_text(
        "user,item,cat,action,ts\n"
        "10,100,cat_a,click,1\n"
        "10,101,cat_b,buy,2\n"
        "11,100,cat_a,buy,3\n"
    )
    events = load_tmall(f, action_filter="buy")
    assert [(e.user_id, e.item_id) for e in events] == [(10, 101), (11, 100)]
    assert events[0].attributes == frozenset({"cat_b"})


def test_load_tmall_empty_file(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("user,item,cat,action,ts\n")
    assert load_tmall(f) == []


def test_load_tmall_missing_category(tmp_path):
    f = tmp_path / "tmall.csv"
    f.write_text("user,item,cat,action,ts\n10,100,,buy,1\n")
    with pytest.raises(DataError, match=":2"):
        load_tmall(f)


def test_load_tmall_unknown_action_code(tmp_path):
    f = tmp_path / "tmall.csv"
    f.write_text("user,item,cat,action,ts\n10,100,cat_a,click,1\n")
    with pytest.raises(ConfigError, match="purchase"):
        load_tmall(f, action_filter="purchase")


# -- filtering ---------------------------------------------------------------


def test_filter_removes_light_user():
    events = user_sequence(1, range(25)) + user_sequence(2, range(19))
    out = filter_min_interactions(events, threshold=20)
    assert {e.user_id for e in out} == {1}


def test_filter_fixed_point_unchanged():
    # two users sharing 20 items: everything at threshold
    events = user_sequence(1, range(20)) + user_sequence(2, range(20))
    out = filter_min_interactions(events, threshold=20)
    assert len(out) == 40


def test_filter_cascade():
    # item 1 is rare; removing it drops user B under threshold, which in turn
    # removes B's other events, but the remaining users keep items alive
    events = (
        user_sequence(100, [2, 3, 4, 5])
        + user_sequence(200, [1, 2, 3])
        + user_sequence(300, [2, 3, 4, 5])
        + user_sequence(400, [2, 3, 4, 5])
    )
    out = filter_min_interactions(events, threshold=3)
    assert {e.user_id for e in out} == {100, 300, 400}
    assert {e.item_id for e in out} == {2, 3, 4, 5}


def test_filter_everything_removed():
    with pytest.raises(DataError):
        filter_min_interactions(user_sequence(1, range(5)), threshold=20)


# -- split / window ----------------------------------------------------------


def test_user_30_events_window_arithmetic():
    ds = split_and_window(user_sequence(1, range(30)))
    # 24 train events -> 15 windows; 6 held-out events -> none
    assert len(ds.train) == 15
    assert len(ds.valid) == 0 and len(ds.test) == 0


def test_user_100_events_window_arithmetic():
    items = [k % 20 for k in range(100)]
    ds = split_and_window(user_sequence(1, items))
    assert len(ds.train) == 71


def test_windows_are_consecutive_events():
    items = [k % 15 for k in range(60)]
    events = user_sequence(1, items)
    ds = split_and_window(events)
    decoded = [
        [ds.item_vocab.external(i) for i in row] for row in ds.train.tolist()
    ]
    # windows slide with stride 1 over the train region
    for w, row in enumerate(decoded):
        assert row == items[w : w + 10]


def test_heldout_split_halves_per_user():
    # 60 events: train cut at 48, held-out 12 -> 3 windows -> 1 valid, 2 test
    items = [k % 12 for k in range(60)]
    ds = split_and_window(user_sequence(1, items))
    assert len(ds.valid) == 1
    assert len(ds.test) == 2


def test_heldout_drops_unseen_items():
    # item 99 appears only in the held-out region -> windows touching it drop
    items = [k % 10 for k in range(48)] + [99] + [k % 10 for k in range(11)]
    ds = split_and_window(user_sequence(1, items))
    assert 99 not in ds.item_vocab
    for row in np.concatenate([ds.valid, ds.test]):
        externals = {ds.item_vocab.external(i) for i in row}
        assert 99 not in externals


def test_valid_test_counts_differ_by_at_most_one_per_user():
    rng = RngState(0)
    events = planted_events(rng, num_users=12, num_items=30, num_attrs=5, seq_len=64)
    by_user = {}
    for e in events:
        by_user.setdefault(e.user_id, []).append(e)
    ds = split_and_window(events)
    # aggregate check: every user contributes ceil/floor halves
    # recompute per user by running the pipeline on singleton users
    for user, seq in by_user.items():
        one = split_and_window(seq)
        assert abs(len(one.test) - len(one.valid)) <= 1
        assert len(one.test) >= len(one.valid)


def test_attribute_table_matches_events():
    rng = RngState(1)
    events = planted_events(rng, num_users=8, num_items=20, num_attrs=4, seq_len=60)
    ds = split_and_window(events)
    attr_of_item = {}
    for e in events:
        attr_of_item[e.item_id] = e.attributes
    for idx in range(len(ds.item_vocab)):
        ext = ds.item_vocab.external(idx)
        expect = {ds.attr_vocab.index(a) for a in attr_of_item[ext]}
        assert set(ds.item_attrs[idx]) == expect


# -- batching ----------------------------------------------------------------


def test_batch_sizes_cover_everything():
    batches = list(batch_iterator(2500, 1024, shuffle=False, rng=RngState(0)))
    assert [len(b) for b in batches] == [1024, 1024, 452]
    assert np.array_equal(np.sort(np.concatenate(batches)), np.arange(2500))


def test_batch_no_shuffle_keeps_order():
    batches = list(batch_iterator(10, 4, shuffle=False, rng=RngState(0)))
    assert np.concatenate(batches).tolist() == list(range(10))


def test_batch_shuffle_deterministic():
    a = list(batch_iterator(100, 16, shuffle=True, rng=RngState(5)))
    b = list(batch_iterator(100, 16, shuffle=True, rng=RngState(5)))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


# -- cache -------------------------------------------------------------------


def test_cache_roundtrip(tmp_path):
    rng = RngState(2)
    ds = split_and_window(
        planted_events(rng, num_users=10, num_items=20, num_attrs=4, seq_len=60)
    )
    path = tmp_path / "cache.npz"
    save_cache(ds, path)
    back = load_cache(path)
    np.testing.assert_array_equal(back.train, ds.train)
    np.testing.assert_array_equal(back.valid, ds.valid)
    np.testing.assert_array_equal(back.test, ds.test)
    assert back.item_attrs.attrs == ds.item_attrs.attrs
    assert back.num_users == ds.num_users
    assert len(back.attr_vocab) == len(ds.attr_vocab)


def test_content_hash_stable_and_sensitive(tmp_path):
    f = tmp_path / "raw.txt"
    f.write_text("hello")
    h1 = content_hash([f], {"window": 10})
    h2 = content_hash([f], {"window": 10})
    assert h1 == h2
    assert content_hash([f], {"window": 11}) != h1
    f.write_text("hello!")
    assert content_hash([f], {"window": 10}) != h1


def test_subsample_users_deterministic():
    rng = RngState(3)
    events = planted_events(rng, num_users=30, num_items=20, num_attrs=4, seq_len=30)
    a = subsample_users(events, 10, RngState(7))
    b = subsample_users(events, 10, RngState(7))
    assert {e.user_id for e in a} == {e.user_id for e in b}
    assert len({e.user_id for e in a}) == 10
