"""Rulebook answers over hand-built exported observations."""

import base64
import json

import numpy as np
import pytest
from PIL import Image

from bridge_client.observations import load_frame
from bridge_client.rulebook import (
    MASKED_VERDICT,
    NO_MOTION_VERDICT,
    ClientAbort,
    DieAfterRulebook,
    FixedEchoRulebook,
    MinDepthRulebook,
    ModelHookRulebook,
    decode_bins,
    encode_bins,
    make_rulebook,
)

BACKGROUND = 65535


def write_png16(path, samples):
    h, w = samples.shape
    data = np.ascontiguousarray(samples, dtype="<u2").tobytes()
    Image.frombytes("I;16", (w, h), data).save(path)


def write_export(out_dir, stem, depth, mask, view=(0.0, 0.0, -1.0),
                 offset=(8, 6)):
    """Lay down the three observation files the way the producer does."""
    h, w = depth.shape
    write_png16(out_dir / f"{stem}.depth.png", depth.astype(np.uint16))
    write_png16(out_dir / f"{stem}.mask.png",
                np.where(mask, np.uint16(65535), np.uint16(0)))
    meta = {
        "schema": "artisim-observation/v1",
        "camera": {"view_direction": list(view), "up": [0.0, 1.0, 0.0],
                   "frame_center": [0.0, 0.0, 2.0], "width": w - 2 * offset[0],
                   "height": h - 2 * offset[1], "pixel_size": 0.05},
        "native_width": w - 2 * offset[0],
        "native_height": h - 2 * offset[1],
        "width": w, "height": h,
        "offset_u": offset[0], "offset_v": offset[1],
        "depth_min": 1.0, "depth_max": 2.0,
        "depth_background": BACKGROUND,
        "files": {"depth": f"{stem}.depth.png", "mask": f"{stem}.mask.png",
                  "meta": f"{stem}.meta.json"},
    }
    (out_dir / f"{stem}.meta.json").write_text(json.dumps(meta))
    return {"dir": str(out_dir), "stem": stem}


def blank_scene(h=24, w=32):
    depth = np.full((h, w), BACKGROUND, dtype=np.uint16)
    mask = np.zeros((h, w), dtype=bool)
    return depth, mask


class TestPoseAnswer:
    def test_picks_the_nearest_pixel_in_exported_coords(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 100
        depth[17, 2] = 200
        ref = write_export(tmp_path, "scene", depth, mask)
        text = MinDepthRulebook().answer({"task": "predict",
                                          "observation": ref})
        assert text == "(13, 5) with direction (50, 50, 99)"

    def test_masked_minimum_is_skipped(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 50
        mask[5, 13] = True
        depth[17, 2] = 80
        ref = write_export(tmp_path, "scene", depth, mask)
        text = MinDepthRulebook().answer({"task": "predict",
                                          "observation": ref})
        assert text.startswith("(2, 17)")

    def test_ties_break_row_major(self, tmp_path):
        depth, mask = blank_scene()
        depth[9, 20] = 100
        depth[3, 25] = 100
        ref = write_export(tmp_path, "scene", depth, mask)
        text = MinDepthRulebook().answer({"task": "predict",
                                          "observation": ref})
        assert text.startswith("(25, 3)")

    def test_direction_follows_the_camera(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 100
        ref = write_export(tmp_path, "side", depth, mask,
                           view=(-1.0, 0.0, 0.0))
        text = MinDepthRulebook().answer({"task": "predict",
                                          "observation": ref})
        assert text.endswith("(99, 50, 50)")

    def test_step4_is_a_pose_answer(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 100
        ref = write_export(tmp_path, "scene", depth, mask)
        text = MinDepthRulebook().answer({"task": "position_cot", "step": 4,
                                          "observation": ref})
        assert text == "(13, 5) with direction (50, 50, 99)"

    def test_missing_observation_is_an_error(self):
        with pytest.raises(ValueError, match="no observation"):
            MinDepthRulebook().answer({"task": "predict"})


class TestStepAnswers:
    @pytest.fixture()
    def masked_ref(self, tmp_path):
        depth, mask = blank_scene()
        depth[:, :] = 300
        mask[8:14, 10:16] = True
        return write_export(tmp_path, "masked", depth, mask)

    def test_step1_reports_mask_presence(self, tmp_path, masked_ref):
        book = MinDepthRulebook()
        assert book.answer({"task": "position_cot", "step": 1,
                            "observation": masked_ref}) == "Yes"
        depth, mask = blank_scene()
        clean = write_export(tmp_path, "clean", depth, mask)
        assert book.answer({"task": "position_cot", "step": 1,
                            "observation": clean}) == "No"

    def test_step2_maps_native_pixels_through_the_offset(self, masked_ref):
        # offsets are (8, 6): native (3, 4) lands at exported (11, 10), inside
        book = MinDepthRulebook()
        inside = {"task": "position_cot", "step": 2, "observation": masked_ref,
                  "prompt": "the contact was at (3, 4) in the image"}
        outside = {"task": "position_cot", "step": 2,
                   "observation": masked_ref, "prompt": "pixel (0, 0)"}
        beyond = {"task": "position_cot", "step": 2, "observation": masked_ref,
                  "prompt": "pixel (-20, -20)"}
        assert book.answer(inside) == "Yes"
        assert book.answer(outside) == "No"
        assert book.answer(beyond) == "No"

    def test_step3_verdict_sentences(self, masked_ref):
        book = MinDepthRulebook()
        hit = {"task": "position_cot", "step": 3, "observation": masked_ref,
               "prompt": "contact (3, 4)"}
        miss = {"task": "position_cot", "step": 3, "observation": masked_ref,
                "prompt": "contact (0, 0)"}
        assert book.answer(hit) == MASKED_VERDICT
        assert book.answer(miss) == NO_MOTION_VERDICT

    def test_step5_confirms(self, masked_ref):
        assert MinDepthRulebook().answer(
            {"task": "position_cot", "step": 5, "observation": masked_ref,
             "prompt": "confirm the plan"}) == "Yes"

    def test_step_prompt_without_pixel_is_an_error(self, masked_ref):
        with pytest.raises(ValueError, match="no pixel"):
            MinDepthRulebook().answer({"task": "position_cot", "step": 2,
                                       "observation": masked_ref,
                                       "prompt": "no coordinates here"})


class TestRotationAnswer:
    def test_prismatic_echoes_the_axis(self):
        prompt = ("The joint is prismatic with axis bins (50, 50, 99); the "
                  "contact is (4, 5) and the surface normal bins are "
                  "(99, 50, 50). Reply with direction bins.")
        text = MinDepthRulebook().answer({"task": "rotation_correct",
                                          "prompt": prompt})
        assert text == "(50, 50, 99)"

    def test_revolute_projects_the_normal_off_the_axis(self):
        prompt = ("The joint is revolute with axis bins (50, 50, 99); the "
                  "contact is (4, 5) and the surface normal bins are "
                  "(99, 50, 50). Reply with direction bins.")
        text = MinDepthRulebook().answer({"task": "rotation_correct",
                                          "prompt": prompt})
        # the projection sheds the axis part of the normal; the tiny negative
        # z of the renormalized remainder lands one bin below center
        assert text == "(99, 50, 49)"

    def test_prompt_without_two_triples_is_an_error(self):
        with pytest.raises(ValueError, match="axis and normal"):
            MinDepthRulebook().answer({"task": "rotation_correct",
                                       "prompt": "axis (50, 50, 99) only"})

    def test_unknown_task_is_an_error(self):
        with pytest.raises(ValueError, match="unknown task"):
            MinDepthRulebook().answer({"task": "meditate"})


class TestBins:
    def test_axis_aligned_round_trip(self):
        for v in np.eye(3):
            for sign in (1.0, -1.0):
                bins = encode_bins(sign * v)
                back = decode_bins(bins)
                assert np.dot(back, sign * v) > 0.99

    def test_encode_clamps_to_valid_bins(self):
        assert encode_bins((1.0, -1.0, 0.0)) == (99, 0, 50)

    def test_decode_rejects_bad_bins(self):
        with pytest.raises(ValueError):
            decode_bins((100, 0, 0))
        with pytest.raises(ValueError):
            decode_bins((-1, 0, 0))
        with pytest.raises(ValueError):
            decode_bins((0, 0))


class TestFaultRulebooks:
    def test_echo_always_says_the_same_thing(self):
        book = FixedEchoRulebook("pass")
        for task in ("predict", "rotation_correct", "position_cot"):
            assert book.answer({"task": task, "step": 1}) == "pass"

    def test_die_after_counts_answers(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 100
        ref = write_export(tmp_path, "scene", depth, mask)
        request = {"task": "predict", "observation": ref, "id": 1}
        book = DieAfterRulebook(2)
        assert book.answer(request).startswith("(13, 5)")
        assert book.answer(request).startswith("(13, 5)")
        with pytest.raises(ClientAbort):
            book.answer(request)

    def test_die_after_zero_dies_immediately(self):
        with pytest.raises(ClientAbort):
            DieAfterRulebook(0).answer({"task": "predict", "id": 9})

    def test_model_hook_is_a_stub(self, tmp_path):
        depth, mask = blank_scene()
        ref = write_export(tmp_path, "scene", depth, mask)
        with pytest.raises(NotImplementedError):
            ModelHookRulebook().answer({"task": "predict",
                                        "observation": ref})

    def test_model_hook_feeds_prompt_and_frame(self, tmp_path):
        seen = {}

        class Probe(ModelHookRulebook):
            def call_model(self, prompt, frame):
                seen["prompt"] = prompt
                seen["frame"] = frame
                return "(1, 2) with direction (50, 50, 99)"

        depth, mask = blank_scene()
        ref = write_export(tmp_path, "scene", depth, mask)
        text = Probe().answer({"task": "predict", "observation": ref,
                               "prompt": "where to grab?"})
        assert text.startswith("(1, 2)")
        assert seen["prompt"] == "where to grab?"
        assert seen["frame"].depth.shape == (24, 32)
        assert Probe().answer({"task": "rotation_correct",
                               "prompt": "(50, 50, 99) (99, 50, 50)"})

    def test_make_rulebook_forms(self):
        assert isinstance(make_rulebook("min-depth"), MinDepthRulebook)
        assert make_rulebook("echo:nope").text == "nope"
        book = make_rulebook("die-after:3")
        assert isinstance(book, DieAfterRulebook)
        assert book.remaining == 3
        with pytest.raises(ValueError):
            make_rulebook("die-after:soon")
        with pytest.raises(ValueError):
            make_rulebook("improv")


class TestLoadFrame:
    def test_inlined_blobs_match_the_filesystem(self, tmp_path):
        depth, mask = blank_scene()
        depth[5, 13] = 100
        mask[2, 2] = True
        ref = write_export(tmp_path, "scene", depth, mask)
        blobs = {}
        for name in ("scene.depth.png", "scene.mask.png", "scene.meta.json"):
            raw = (tmp_path / name).read_bytes()
            blobs[name] = base64.b64encode(raw).decode("ascii")
        from_disk = load_frame(ref)
        inlined = load_frame({"dir": "/nowhere", "stem": "scene",
                              "blobs": blobs})
        assert np.array_equal(from_disk.depth, inlined.depth)
        assert np.array_equal(from_disk.mask, inlined.mask)
        assert from_disk.meta == inlined.meta

    def test_wrong_schema_rejected(self, tmp_path):
        depth, mask = blank_scene()
        ref = write_export(tmp_path, "scene", depth, mask)
        meta_path = tmp_path / "scene.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["schema"] = "observation/v0"
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(ValueError, match="schema"):
            load_frame(ref)

    def test_missing_meta_key_rejected(self, tmp_path):
        depth, mask = blank_scene()
        ref = write_export(tmp_path, "scene", depth, mask)
        meta_path = tmp_path / "scene.meta.json"
        meta = json.loads(meta_path.read_text())
        del meta["depth_background"]
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(ValueError, match="depth_background"):
            load_frame(ref)

    def test_bad_reference_rejected(self):
        with pytest.raises(ValueError, match="reference"):
            load_frame({"dir": "/tmp"})
        with pytest.raises(ValueError, match="reference"):
            load_frame(None)

    def test_quantized_depth_survives_the_png(self, tmp_path):
        rng = np.random.default_rng(3)
        depth = rng.integers(0, 65536, size=(24, 32)).astype(np.uint16)
        mask = np.zeros((24, 32), dtype=bool)
        ref = write_export(tmp_path, "noise", depth, mask)
        assert np.array_equal(load_frame(ref).depth, depth)
