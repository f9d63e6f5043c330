import json

import pytest

import icefuse
from iceb_exporter import ExportError, ExportJob, export, make_demo_dataset


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo_desc")
    make_demo_dataset(root, n_images=24, seed=5)
    return root


def write_descriptors(path, table):
    path.write_text(json.dumps(table), encoding="utf-8")
    return str(path)


DESCRIPTORS = {
    "red": ["the color of ripe tomatoes", "a warm red hue", "crimson shades"],
    "green": ["the color of fresh grass", "a leafy green tone"],
    "blue": ["the color of a clear sky", "deep ocean blue"],
    "yellow": ["the color of lemons", "a sunny yellow shade"],
}


class TestDescriptorExport:
    def test_members_stored_per_class(self, demo_dir, tmp_path):
        desc = write_descriptors(tmp_path / "d.json", DESCRIPTORS)
        out = tmp_path / "desc.iceb"
        export(
            ExportJob(
                dataset_root=str(demo_dir),
                output_path=str(out),
                descriptor_file=desc,
                prototype_reduction="score_mean",
            )
        )
        bundle = icefuse.read_bundle(out)
        assert bundle.members_per_class == (3, 2, 2, 2)
        assert bundle.manifest.extra["descriptor_file"] == desc

    def test_single_descriptor_all_reductions_agree(self, demo_dir, tmp_path):
        one_each = {name: [f"a photo of something {name}"] for name in DESCRIPTORS}
        desc = write_descriptors(tmp_path / "one.json", one_each)
        out = tmp_path / "one.iceb"
        export(
            ExportJob(
                dataset_root=str(demo_dir),
                output_path=str(out),
                descriptor_file=desc,
                prototype_reduction="score_mean",
            )
        )
        bundle = icefuse.read_bundle(out)
        cfg = icefuse.IceConfig(tau=bundle.tau_hint)
        rep = icefuse.evaluate(
            bundle, cfg, methods=("ice", "ice:centroid", "ice:single")
        )
        accs = {mr.method: mr.top1_pct for mr in rep.methods}
        assert accs["ice"] == accs["ice:centroid"] == accs["ice:single"]

    def test_centroid_vs_score_mean_differ_in_engine(self, demo_dir, tmp_path):
        desc = write_descriptors(tmp_path / "d.json", DESCRIPTORS)
        out = tmp_path / "multi.iceb"
        export(
            ExportJob(
                dataset_root=str(demo_dir),
                output_path=str(out),
                descriptor_file=desc,
                prototype_reduction="score_mean",
            )
        )
        bundle = icefuse.read_bundle(out)
        cfg = icefuse.IceConfig(tau=bundle.tau_hint)
        rep = icefuse.evaluate(bundle, cfg, methods=("ice", "ice:centroid"))
        # scoring paths differ; distributions must not be identical
        recs_mean = rep.records["score_mean"]
        recs_cent = rep.records["centroid"]
        assert any(
            a.caption_pred != b.caption_pred or a.lambda_used != b.lambda_used
            for a, b in zip(recs_mean, recs_cent)
        )

    def test_missing_class_names_the_class(self, demo_dir, tmp_path):
        partial = {k: v for k, v in DESCRIPTORS.items() if k != "blue"}
        desc = write_descriptors(tmp_path / "p.json", partial)
        with pytest.raises(ExportError, match="blue"):
            export(
                ExportJob(
                    dataset_root=str(demo_dir),
                    output_path=str(tmp_path / "x.iceb"),
                    descriptor_file=desc,
                    prototype_reduction="score_mean",
                )
            )

    def test_empty_descriptor_list_rejected(self, demo_dir, tmp_path):
        bad = dict(DESCRIPTORS, green=[])
        desc = write_descriptors(tmp_path / "bad.json", bad)
        with pytest.raises(ExportError, match="green"):
            export(
                ExportJob(
                    dataset_root=str(demo_dir),
                    output_path=str(tmp_path / "x.iceb"),
                    descriptor_file=desc,
                    prototype_reduction="score_mean",
                )
            )
