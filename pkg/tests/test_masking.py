import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from faceveil.backends import ToyFaceParser, default_toy_layout
from faceveil.masking import (
    CELEBAMASK_LABELS,
    DEFAULT_REGIONS,
    FaceMask,
    LabelMap,
    ParseMap,
    apply_mask,
    composite,
    dilate_mask,
    full_face_mask,
    load_label_map,
    load_mask,
    load_parse_map,
    localized_mask,
    save_mask,
    save_parse_map,
)

REGION_NAMES = ("eyes", "lips", "nose", "eyebrows")


@pytest.fixture(scope="module")
def toy_parse():
    return ToyFaceParser().parse(np.zeros((8, 8)))


def random_parse(seed, shape=(8, 8)):
    rng = np.random.default_rng(seed)
    return ParseMap(rng.integers(0, 19, size=shape))


class TestLabelTable:
    def test_nineteen_contiguous_labels(self):
        assert sorted(CELEBAMASK_LABELS.values()) == list(range(19))
        assert CELEBAMASK_LABELS["background"] == 0
        assert CELEBAMASK_LABELS["skin"] == 1
        assert CELEBAMASK_LABELS["hair"] == 17

    def test_default_regions_cover_the_expected_labels(self):
        assert set(DEFAULT_REGIONS) == set(REGION_NAMES)
        assert set(DEFAULT_REGIONS["lips"]) == {"u_lip", "l_lip", "mouth"}

    def test_label_map_indices(self):
        lm = LabelMap()
        assert lm.num_labels == 19
        assert lm.names["l_eye"] in lm.region_indices("eyes")
        assert lm.names["hair"] not in lm.face_indices()

    def test_unknown_region_error_names_it(self):
        with pytest.raises(ValueError, match="sideburns"):
            LabelMap().region_indices("sideburns")

    def test_label_map_rejects_unknown_face_label(self):
        with pytest.raises(ValueError, match="missing"):
            LabelMap(names={"background": 0}, face=("skin",))

    def test_load_label_map_round_trip(self, tmp_path):
        path = tmp_path / "labels.json"
        path.write_text(
            json.dumps(
                {
                    "labels": {"background": 0, "skin": 1, "l_eye": 2},
                    "face": ["skin", "l_eye"],
                    "regions": {"eyes": ["l_eye"]},
                }
            )
        )
        lm = load_label_map(path)
        assert lm.num_labels == 3
        assert lm.face_indices() == frozenset({1, 2})
        assert lm.region_indices("eyes") == frozenset({2})


class TestParseMapAndFaceMask:
    def test_parse_map_bounds_checked(self):
        with pytest.raises(ValueError):
            ParseMap(np.full((4, 4), 19))
        with pytest.raises(ValueError):
            ParseMap(np.full((4, 4), -1))

    def test_parse_map_requires_integers(self):
        with pytest.raises(ValueError, match="integers"):
            ParseMap(np.zeros((4, 4)))

    def test_face_mask_rejects_nonbinary(self):
        with pytest.raises(ValueError, match="binary"):
            FaceMask(np.array([[0, 2], [1, 0]]))

    def test_face_mask_accepts_zero_one_ints(self):
        mask = FaceMask(np.array([[0, 1], [1, 0]]))
        assert mask.mask.dtype == np.bool_
        assert mask.editable_fraction() == 0.5


class TestMaskConstruction:
    def test_full_face_fraction_on_toy_layout(self, toy_parse):
        # rows 1..6 of the 8x8 layout are face labels: 48 of 64 pixels
        mask = full_face_mask(toy_parse)
        assert mask.editable_fraction() == pytest.approx(48 / 64)
        assert not mask.mask[0].any()
        assert not mask.mask[7].any()
        assert mask.mask[1:7].all()

    def test_localized_subtracts_kept_regions(self, toy_parse):
        lm = LabelMap()
        full = full_face_mask(toy_parse, lm)
        kept_eyes = localized_mask(toy_parse, ("eyes",), lm)
        eye_pixels = np.isin(
            toy_parse.labels, sorted(lm.region_indices("eyes"))
        )
        assert np.array_equal(kept_eyes.mask, full.mask & ~eye_pixels)

    def test_all_sixteen_region_subsets_stay_inside_full(self, toy_parse):
        full = full_face_mask(toy_parse)
        for r in range(5):
            for keep in itertools.combinations(REGION_NAMES, r):
                sub = localized_mask(toy_parse, keep, LabelMap())
                assert not (sub.mask & ~full.mask).any()
                if keep:
                    assert sub.mask.sum() < full.mask.sum()

    def test_unknown_keep_region_rejected(self, toy_parse):
        with pytest.raises(ValueError, match="ears"):
            localized_mask(toy_parse, ("ears",))

    @settings(max_examples=40, deadline=None)
    @given(
        labels=hnp.arrays(
            np.int64, (8, 8), elements=st.integers(min_value=0, max_value=18)
        ),
        keep=st.sets(st.sampled_from(REGION_NAMES)),
    )
    def test_localized_subset_property(self, labels, keep):
        parse = ParseMap(labels)
        full = full_face_mask(parse)
        sub = localized_mask(parse, tuple(sorted(keep)))
        assert not (sub.mask & ~full.mask).any()


class TestApplyAndComposite:
    def test_apply_mask_zeroes_editable_region_only(self, make_image):
        image = make_image(0)
        mask = FaceMask(np.indices((8, 8)).sum(axis=0) % 2 == 0)
        masked = apply_mask(image, mask)
        assert np.all(masked[mask.mask] == 0.0)
        assert np.array_equal(masked[~mask.mask], image[~mask.mask])

    def test_apply_mask_preserves_dtype_and_input(self, make_image):
        image = (make_image(1) * 100).astype(np.int32)
        before = image.copy()
        masked = apply_mask(image, FaceMask(np.ones((8, 8), dtype=bool)))
        assert masked.dtype == np.int32
        assert np.array_equal(image, before)

    def test_composite_selects_exactly(self, make_image):
        original = make_image(2)
        generated = make_image(3)
        mask = FaceMask(np.indices((8, 8)).sum(axis=0) % 3 == 0)
        out = composite(original, generated, mask)
        oracle = np.where(mask.mask, generated, original)
        assert np.array_equal(out, oracle)

    def test_partition_identity(self, make_image):
        """apply_mask keeps the complement, the mask keeps the rest:
        together they reassemble the image exactly."""
        image = make_image(4)
        mask = FaceMask(np.indices((8, 8)).sum(axis=0) % 2 == 1)
        reassembled = apply_mask(image, mask) + image * mask.mask
        assert np.array_equal(reassembled, image)

    def test_shape_mismatch_rejected(self, make_image):
        mask = FaceMask(np.ones((4, 4), dtype=bool))
        with pytest.raises(ValueError):
            apply_mask(make_image(5), mask)
        with pytest.raises(ValueError):
            composite(make_image(5), make_image(6), mask)

    @settings(max_examples=30, deadline=None)
    @given(
        image=hnp.arrays(
            np.float64,
            (6, 6),
            elements=st.floats(min_value=-1, max_value=1, width=64),
        ),
        mask_bits=hnp.arrays(np.bool_, (6, 6)),
    )
    def test_composite_agrees_with_elementwise_oracle(self, image, mask_bits):
        mask = FaceMask(mask_bits)
        generated = -image
        out = composite(image, generated, mask)
        for i in range(6):
            for j in range(6):
                expected = generated[i, j] if mask_bits[i, j] else image[i, j]
                assert out[i, j] == expected


class TestDilation:
    def test_radius_zero_is_identity(self, toy_parse):
        mask = full_face_mask(toy_parse)
        assert np.array_equal(dilate_mask(mask, 0).mask, mask.mask)

    def test_dilation_grows_monotonically(self):
        seed = np.zeros((9, 9), dtype=bool)
        seed[4, 4] = True
        mask = FaceMask(seed)
        sizes = [dilate_mask(mask, r).mask.sum() for r in range(4)]
        assert sizes[0] == 1
        assert sizes == sorted(sizes)
        assert dilate_mask(mask, 1).mask[4, 5]
        assert not dilate_mask(mask, 1).mask[5, 5]  # disk, not square

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            dilate_mask(FaceMask(np.ones((2, 2), dtype=bool)), -1)


class TestPngRoundTrips:
    def test_parse_map_round_trip(self, tmp_path, toy_parse):
        path = tmp_path / "parse.png"
        save_parse_map(path, toy_parse)
        again = load_parse_map(path)
        assert np.array_equal(again.labels, toy_parse.labels)

    def test_mask_round_trip_and_binary_encoding(self, tmp_path, toy_parse):
        path = tmp_path / "mask.png"
        mask = full_face_mask(toy_parse)
        save_mask(path, mask)
        from PIL import Image

        raw = np.asarray(Image.open(path))
        assert set(np.unique(raw)) <= {0, 255}
        again = load_mask(path)
        assert np.array_equal(again.mask, mask.mask)

    def test_load_mask_rejects_gray_values(self, tmp_path):
        from PIL import Image

        path = tmp_path / "gray.png"
        Image.fromarray(np.full((4, 4), 128, dtype=np.uint8), "L").save(path)
        with pytest.raises(ValueError):
            load_mask(path)
