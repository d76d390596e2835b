from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pytest

from app.errors import DatasetError, ParseError
from app.services.dataset import (
    binarize,
    build_eval_instance,
    build_eval_instances,
    filter_users,
    holdout_size,
    load_items,
    load_ratings,
    normalize_title,
    parse_items,
    parse_items_csv,
    parse_ratings,
    parse_ratings_csv,
    prepare_dataset,
    rating_histogram,
    read_instances,
    split_title,
    split_users,
    write_instances,
)
from models.dataset_models import DatasetConfig, EvalInstance, Item, Rating, UserProfile


def make_profile(user_id=1, n_pos=10, n_neg=6):
    positives = tuple(range(100, 100 + n_pos))
    negatives = tuple(range(500, 500 + n_neg))
    return UserProfile(user_id, positives, negatives)


# ==========================================
# TITLES
# ==========================================

class TestTitles:
    """Display titles: trailing year dropped, trailing article moved to the front"""

    @pytest.mark.parametrize("raw, expected", [
        ("Matrix, The (1999)", "The Matrix"),
        ("Toy Story (1995)", "Toy Story"),
        ("American President, The (1995)", "The American President"),
        ("Few Good Men, A (1992)", "A Few Good Men"),
        ("Seven (Se7en) (1995)", "Seven"),
        ("Die Hard 2 (1990)", "Die Hard 2"),
        ("City of Lost Children, The (Cité des enfants perdus, La) (1995)", "The City of Lost Children"),
    ])
    def test_normalize_title(self, raw, expected):
        assert normalize_title(raw) == expected

    @pytest.mark.parametrize("raw", [
        "Matrix, The (1999)",
        "Seven (Se7en) (1995)",
        "City of Lost Children, The (Cité des enfants perdus, La) (1995)",
        "Shawshank Redemption, The (1994)",
        "2001: A Space Odyssey (1968)",
    ])
    def test_normalize_title_is_idempotent(self, raw):
        once = normalize_title(raw)
        assert normalize_title(once) == once

    def test_split_title_keeps_year_and_alternates(self):
        assert split_title("Seven (Se7en) (1995)") == ("Seven", 1995, ("Se7en",))
        assert split_title("Seven (a.k.a. Se7en) (1995)") == ("Seven", 1995, ("Se7en",))

    def test_foreign_articles_are_opt_in(self):
        raw = "City of Lost Children, The (Cité des enfants perdus, La) (1995)"
        assert split_title(raw)[2] == ("Cité des enfants perdus, La",)
        assert split_title(raw, foreign_articles=True)[2] == ("La Cité des enfants perdus",)


# ==========================================
# PARSING
# ==========================================

class TestParsing:
    """MovieLens .dat and .csv readers"""

    def test_parse_ratings_in_file_order(self):
        ratings = parse_ratings(b"1::1193::5::978300760\n\n1::661::3::978302109\n")
        assert ratings == [Rating(1, 1193, 5.0, 978300760), Rating(1, 661, 3.0, 978302109)]

    def test_parse_error_carries_line_number(self):
        with pytest.raises(ParseError) as excinfo:
            parse_ratings(b"1::2::5::1\n1::2::5\n")
        assert excinfo.value.line_no == 2
        assert "expected 4 fields" in str(excinfo.value)

    @pytest.mark.parametrize("line", [b"1::x::5::1", b"0::2::5::1", b"1::2::7::1", b"1::2::0::1"])
    def test_parse_ratings_rejects_bad_values(self, line):
        with pytest.raises(ParseError) as excinfo:
            parse_ratings(line + b"\n")
        assert excinfo.value.line_no == 1

    def test_parse_items_decodes_latin1(self):
        data = "1::Cité des enfants perdus, La (1995)::Adventure|Sci-Fi\n".encode("latin-1")
        (item,) = parse_items(data, foreign_articles=True)
        assert item.item_id == 1
        assert item.display_title == "La Cité des enfants perdus"
        assert item.year == 1995
        assert item.genres == ("Adventure", "Sci-Fi")

    def test_parse_items_requires_three_fields(self):
        with pytest.raises(ParseError):
            parse_items(b"1::Toy Story (1995)\n")

    def test_parse_items_keeps_quotes_and_handles_crlf(self):
        data = b'1::"Great Performances" Cats (1998)::Musical\r\n2::Heat (1995)::Action|Crime\r\n'
        items = parse_items(data)
        assert items[0].raw_title == '"Great Performances" Cats (1998)'
        assert items[1].genres == ("Action", "Crime")

    def test_extra_fields_are_a_parse_error(self):
        with pytest.raises(ParseError) as excinfo:
            parse_ratings(b"1::2::5::1\n1::3::4::2\n1::4::5::3::9\n")
        assert excinfo.value.line_no == 3

    def test_reads_from_path(self, tmp_path):
        path = tmp_path / "ratings.dat"
        path.write_bytes(b"2::10::4::5\n\n2::11::1::6\n")
        assert parse_ratings(path) == [Rating(2, 10, 4.0, 5), Rating(2, 11, 1.0, 6)]
        assert parse_ratings(b"") == []

    def test_csv_readers(self):
        ratings = parse_ratings_csv(b"userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n1,1029,3.0,1260759179\n")
        assert ratings[0] == Rating(1, 31, 2.5, 1260759144)
        items = parse_items_csv(b'movieId,title,genres\n1,"Matrix, The (1999)",Action|Sci-Fi\n')
        assert items[0].display_title == "The Matrix"

    def test_csv_error_uses_file_line_numbers(self):
        with pytest.raises(ParseError) as excinfo:
            parse_ratings_csv(b"userId,movieId,rating,timestamp\n1,31,2.5,1\n1,31,9.0,2\n")
        assert excinfo.value.line_no == 3

    def test_load_dispatches_on_suffix(self, tmp_path):
        (tmp_path / "ratings.dat").write_bytes(b"1::10::4::5\n")
        (tmp_path / "ratings.csv").write_bytes(b"userId,movieId,rating,timestamp\n1,10,4.0,5\n")
        (tmp_path / "movies.dat").write_bytes(b"10::Heat (1995)::Action\n")
        assert load_ratings(tmp_path / "ratings.dat") == load_ratings(tmp_path / "ratings.csv")
        assert load_items(tmp_path / "movies.dat")[0].display_title == "Heat"


# ==========================================
# BINARIZATION & SPLIT
# ==========================================

class TestBinarize:
    """Thresholds, duplicates and filtering"""

    def test_thresholds_and_order(self):
        cfg = DatasetConfig()
        ratings = [
            Rating(1, 10, 5.0, 30),
            Rating(1, 11, 4.0, 10),
            Rating(1, 12, 3.0, 20),
            Rating(1, 13, 2.0, 40),
            Rating(1, 14, 2.5, 5),
        ]
        (profile,) = binarize(ratings, cfg)
        assert profile.positives == (11, 10)
        assert profile.negatives == (14, 13)

    def test_latest_rating_wins(self):
        ratings = [Rating(1, 10, 5.0, 100), Rating(1, 10, 1.0, 200), Rating(2, 10, 1.0, 100), Rating(2, 10, 5.0, 200)]
        profiles = binarize(ratings, DatasetConfig())
        assert profiles[0] == UserProfile(1, (), (10,))
        assert profiles[1] == UserProfile(2, (10,), ())

    def test_positives_and_negatives_are_disjoint(self, planted_dataset):
        for profile in planted_dataset.profiles:
            assert not set(profile.positives) & set(profile.negatives)

    def test_filter_users(self):
        cfg = DatasetConfig(min_pos=6, min_neg=2)
        kept = filter_users([make_profile(1, 6, 2), make_profile(2, 5, 9), make_profile(3, 9, 1)], cfg)
        assert [p.user_id for p in kept] == [1]

    def test_rating_histogram(self):
        ratings = [Rating(1, 1, 5.0, 1), Rating(1, 2, 3.0, 1), Rating(2, 1, 5.0, 1)]
        assert rating_histogram(ratings) == {3.0: 1, 5.0: 2}


class TestSplit:
    """Seeded train/test partition"""

    @pytest.mark.parametrize("n, expected", [(50, 10), (10, 2), (5, 1), (2, 1), (7, 1), (8, 2)])
    def test_holdout_size(self, n, expected):
        assert holdout_size(n, 0.2) == expected

    def test_split_is_a_partition(self):
        profiles = [make_profile(u) for u in range(1, 31)]
        train_ids, test_ids = split_users(profiles, DatasetConfig())
        assert len(test_ids) == 6
        assert sorted(train_ids + test_ids) == list(range(1, 31))
        assert not set(train_ids) & set(test_ids)

    def test_split_depends_only_on_seed(self):
        profiles = [make_profile(u) for u in range(1, 31)]
        assert split_users(profiles, DatasetConfig(seed=3)) == split_users(list(reversed(profiles)), DatasetConfig(seed=3))
        assert split_users(profiles, DatasetConfig(seed=3)) != split_users(profiles, DatasetConfig(seed=4))

    def test_split_needs_two_profiles(self):
        with pytest.raises(DatasetError):
            split_users([make_profile(1)], DatasetConfig())


# ==========================================
# EVALUATION INSTANCES
# ==========================================

class TestInstances:
    """One positive, num_neg negatives, context drawn from the other positives"""

    def test_instance_shape(self):
        profile = make_profile()
        instance = build_eval_instance(profile, DatasetConfig(min_pos=6))
        assert len(instance.candidates) == 5
        assert sum(c.label for c in instance.candidates) == 1
        assert instance.positive_item in profile.positives
        assert set(instance.candidate_ids) - {instance.positive_item} <= set(profile.negatives)
        assert len(instance.context_items) == 5
        assert set(instance.context_items) <= set(profile.positives) - {instance.positive_item}
        assert instance.candidate_ids == sorted(instance.candidate_ids)

    def test_instances_are_deterministic(self):
        cfg = DatasetConfig(min_pos=6, seed=7)
        assert build_eval_instance(make_profile(), cfg) == build_eval_instance(make_profile(), cfg)

    def test_context_size_changes_only_the_context(self):
        cfg = DatasetConfig(min_pos=6)
        small = build_eval_instance(make_profile(), cfg, context_size=2)
        large = build_eval_instance(make_profile(), cfg, context_size=9)
        assert small.candidates == large.candidates
        assert large.context_items[:2] == small.context_items
        assert large.truncated(2) == small

    def test_context_size_zero(self):
        instance = build_eval_instance(make_profile(), DatasetConfig(min_pos=6), context_size=0)
        assert instance.context_items == ()

    def test_too_few_positives(self):
        with pytest.raises(DatasetError):
            build_eval_instance(make_profile(n_pos=5), DatasetConfig(min_pos=6))

    def test_too_few_negatives(self):
        with pytest.raises(DatasetError):
            build_eval_instance(make_profile(n_neg=3), DatasetConfig(min_pos=6))

    def test_min_neg_below_candidate_count(self):
        cfg = DatasetConfig(min_pos=6, min_neg=2)
        with pytest.raises(DatasetError):
            build_eval_instances([make_profile()], {}, cfg)

    def test_items_must_be_in_catalog(self):
        with pytest.raises(DatasetError):
            build_eval_instances([make_profile()], [Item(100, "x", "x")], DatasetConfig(min_pos=6))

    def test_jsonl_round_trip(self, tmp_path, planted_dataset):
        path = tmp_path / "instances.jsonl"
        write_instances(planted_dataset.instances, path)
        assert read_instances(path) == planted_dataset.instances

    def test_malformed_instance_line(self, tmp_path):
        path = tmp_path / "instances.jsonl"
        path.write_text('{"user_id": 1, "context_items": [], "candidates": []}\n', encoding="utf-8")
        with pytest.raises(ParseError):
            read_instances(path)

    def test_instance_rejects_two_positives(self):
        with pytest.raises(ValueError):
            EvalInstance(
                user_id=1,
                context_items=(),
                candidates=({"item_id": 1, "label": 1}, {"item_id": 2, "label": 1}),
            )


# ==========================================
# PIPELINE
# ==========================================

def test_prepare_planted_dataset(planted_dataset):
    stats = planted_dataset.stats
    assert stats.filtered_users == 50
    assert (stats.train_users, stats.test_users) == (40, 10)
    assert stats.positive_ratings == 50 * 24
    assert stats.negative_ratings == 50 * 8
    assert stats.discarded_ratings == 0
    assert len(planted_dataset.instances) == 10
    assert [i.user_id for i in planted_dataset.instances] == [p.user_id for p in planted_dataset.test_profiles]


def test_prepare_is_a_pure_function(planted_ratings, planted_items):
    first = prepare_dataset(planted_ratings, planted_items, DatasetConfig())
    second = prepare_dataset(list(planted_ratings), list(planted_items), DatasetConfig())
    assert first.instances == second.instances
    assert first.stats == second.stats
