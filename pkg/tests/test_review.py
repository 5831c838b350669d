import io
import json

import pytest

from synoe.audit import audit_manifest
from synoe.errors import InvalidClass, InvariantError, UnknownAnnotation
from synoe.model import (
    Annotation,
    AuditState,
    BBox,
    CategoryRegistry,
    DatasetManifest,
    ImageRecord,
    Provenance,
    load_manifest,
)
from synoe.review import ReviewDecision, ReviewStore, Verdict

REGISTRY = CategoryRegistry()


def flagged_ood(ann_id, prompt="tiger"):
    return Annotation(
        id=ann_id,
        image_id=1,
        bbox=BBox(10 * ann_id, 10, 8, 8),
        category_index=REGISTRY.ood_index,
        provenance=Provenance.INPAINTED_OOD,
        prompt_used=prompt,
        audit_state=AuditState.AMBIGUOUS,
    )


def make_manifest(annotations, file_path="a.png"):
    return DatasetManifest(
        images=(ImageRecord(image_id=1, width=1000, height=1000, file_path=file_path),),
        annotations=tuple(annotations),
        registry=REGISTRY,
    )


def make_evidence(ann_ids, label="zebra"):
    return {
        str(i): {
            "prompt": "tiger",
            "scenario": "refined_ood",
            "source_annotation_id": None,
            "detections": [
                {"bbox": [0, 0, 5, 5], "label": label, "score": 0.7, "stage": "refine"}
            ],
        }
        for i in ann_ids
    }


class TestVerdicts:
    def store(self, n=1):
        return ReviewStore(make_manifest([flagged_ood(i) for i in range(1, n + 1)]))

    def find(self, store, ann_id):
        return next(a for a in store.manifest.annotations if a.id == ann_id)

    def test_accept_ood(self):
        store = self.store()
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD))
        ann = self.find(store, 1)
        assert ann.category_index == REGISTRY.ood_index
        assert ann.provenance is Provenance.INPAINTED_OOD
        assert ann.audit_state is AuditState.HUMAN_RESOLVED

    def test_reassign_id(self):
        store = self.store()
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.REASSIGN_ID, new_class="car"))
        ann = self.find(store, 1)
        assert ann.category_index == 3  # Car
        assert ann.provenance is Provenance.INPAINTED_ID_RETAINED
        assert ann.audit_state is AuditState.HUMAN_RESOLVED

    def test_discard(self):
        store = self.store()
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.DISCARD))
        ann = self.find(store, 1)
        assert ann.provenance is Provenance.REMOVED
        assert ann not in store.manifest.active_annotations()

    def test_reassign_requires_valid_id_class(self):
        store = self.store()
        with pytest.raises(InvalidClass):
            store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.REASSIGN_ID))
        with pytest.raises(InvalidClass):
            store.submit(
                ReviewDecision(annotation_id=1, verdict=Verdict.REASSIGN_ID, new_class="OOD")
            )
        with pytest.raises(InvalidClass):
            store.submit(
                ReviewDecision(annotation_id=1, verdict=Verdict.REASSIGN_ID, new_class="giraffe")
            )

    def test_unknown_annotation(self):
        with pytest.raises(UnknownAnnotation):
            self.store().submit(ReviewDecision(annotation_id=99, verdict=Verdict.DISCARD))

    def test_only_flagged_accept_decisions(self):
        clean = Annotation(
            id=1, image_id=1, bbox=BBox(0, 0, 5, 5), category_index=REGISTRY.ood_index,
            provenance=Provenance.INPAINTED_OOD, prompt_used="tiger",
            audit_state=AuditState.CONFIRMED,
        )
        store = ReviewStore(make_manifest([clean]))
        with pytest.raises(InvariantError):
            store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.DISCARD))

    def test_supersession_last_wins(self):
        store = self.store()
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.DISCARD))
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD))
        ann = self.find(store, 1)
        assert ann.provenance is Provenance.INPAINTED_OOD
        assert len(store.history) == 2


class TestJournal:
    def test_replay_reproduces_state(self, tmp_path):
        journal = tmp_path / "journal.ndjson"
        anns = [flagged_ood(i) for i in range(1, 4)]
        store = ReviewStore(make_manifest(anns), journal_path=journal)
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD))
        store.submit(ReviewDecision(annotation_id=2, verdict=Verdict.REASSIGN_ID, new_class="Truck"))
        store.submit(ReviewDecision(annotation_id=3, verdict=Verdict.DISCARD))
        store.submit(ReviewDecision(annotation_id=3, verdict=Verdict.ACCEPT_OOD))

        fresh = ReviewStore(make_manifest(anns), journal_path=journal)
        assert fresh.manifest.annotations == store.manifest.annotations
        assert len(fresh.history) == 4

    def test_journal_lines_are_ndjson(self, tmp_path):
        journal = tmp_path / "journal.ndjson"
        store = ReviewStore(make_manifest([flagged_ood(1)]), journal_path=journal)
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.DISCARD, reviewer="sam"))
        lines = journal.read_text().splitlines()
        assert len(lines) == 1
        entry = json.loads(lines[0])
        assert entry["annotation_id"] == 1
        assert entry["verdict"] == "discard"
        assert entry["reviewer"] == "sam"
        assert "timestamp" in entry

    def test_corrupt_journal_rejected(self, tmp_path):
        journal = tmp_path / "journal.ndjson"
        journal.write_text('{"annotation_id": 1, "verdict": "discard"}\n{oops\n')
        from synoe.errors import ParseError

        with pytest.raises(ParseError, match=":2"):
            ReviewStore(make_manifest([flagged_ood(1)]), journal_path=journal)


class TestFlaggedListing:
    def test_only_ambiguous_ood_listed(self):
        anns = [
            flagged_ood(1),
            Annotation(id=2, image_id=1, bbox=BBox(30, 10, 8, 8), category_index=3),
            Annotation(
                id=3, image_id=1, bbox=BBox(50, 10, 8, 8), category_index=REGISTRY.ood_index,
                provenance=Provenance.INPAINTED_OOD, prompt_used="x",
                audit_state=AuditState.CONFIRMED,
            ),
        ]
        page = ReviewStore(make_manifest(anns)).flagged()
        assert page["total"] == 1
        assert [i["annotation_id"] for i in page["items"]] == [1]

    def test_pagination(self):
        store = ReviewStore(make_manifest([flagged_ood(i) for i in range(1, 8)]))
        p1 = store.flagged(page=1, size=3)
        p3 = store.flagged(page=3, size=3)
        assert [i["annotation_id"] for i in p1["items"]] == [1, 2, 3]
        assert [i["annotation_id"] for i in p3["items"]] == [7]
        assert p1["total"] == 7

    def test_bad_page_args(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        with pytest.raises(InvariantError):
            store.flagged(page=0)

    def test_summary_shows_top_evidence(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]), evidence=make_evidence([1]))
        item = store.flagged()["items"][0]
        assert item["top_label"] == "zebra"
        assert item["top_score"] == 0.7
        assert item["prompt"] == "tiger"

    def test_resolved_items_leave_queue(self):
        store = ReviewStore(make_manifest([flagged_ood(1), flagged_ood(2)]))
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD))
        assert store.flagged()["total"] == 1


class TestItemDetail:
    def test_detail_with_lineage(self):
        original = Annotation(
            id=10, image_id=1, bbox=BBox(100, 100, 40, 30), category_index=3,
            provenance=Provenance.REMOVED,
        )
        evidence = make_evidence([1])
        evidence["1"]["source_annotation_id"] = 10
        evidence["1"]["original_label"] = "Car"
        store = ReviewStore(make_manifest([flagged_ood(1), original]), evidence=evidence)
        detail = store.item(1)
        assert detail["category"] == "OOD"
        assert detail["original"]["annotation_id"] == 10
        assert detail["original"]["bbox"] == [100, 100, 40, 30]
        assert detail["original"]["label"] == "Car"
        assert detail["id_classes"] == list(REGISTRY.id_classes)
        assert detail["last_decision"] is None

    def test_last_decision_recorded(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD, reviewer="kim"))
        assert store.item(1)["last_decision"]["reviewer"] == "kim"

    def test_string_id_lookup(self):
        store = ReviewStore(make_manifest([flagged_ood(7)]))
        assert store.item("7")["annotation_id"] == 7


class TestExportAndReaudit:
    def test_export_then_reaudit_zero_ambiguous(self, tmp_path):
        anns = [flagged_ood(i) for i in range(1, 5)]
        evidence = make_evidence(range(1, 5))
        store = ReviewStore(make_manifest(anns), evidence=evidence)
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.ACCEPT_OOD))
        store.submit(ReviewDecision(annotation_id=2, verdict=Verdict.REASSIGN_ID, new_class="Bus"))
        store.submit(ReviewDecision(annotation_id=3, verdict=Verdict.DISCARD))
        store.submit(ReviewDecision(annotation_id=4, verdict=Verdict.ACCEPT_OOD))

        out = tmp_path / "reviewed.json"
        result = store.export(out)
        assert result["resolved"] == 4
        assert result["decisions"] == 4

        exported = load_manifest(out)
        _, report = audit_manifest(exported, evidence)
        assert report.ambiguous == 0
        # discarded and reassigned annotations no longer count as outliers
        assert report.total == 2

    def test_export_matches_in_memory_state(self, tmp_path):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        store.submit(ReviewDecision(annotation_id=1, verdict=Verdict.DISCARD))
        out = tmp_path / "m.json"
        store.export(out)
        assert load_manifest(out).annotations == store.manifest.annotations


class TestHttpApi:
    def client(self, store, tmp_path=None):
        from fastapi.testclient import TestClient

        from synoe.server.review_app import create_review_app

        return TestClient(create_review_app(store))

    def test_flagged_endpoint(self):
        store = ReviewStore(make_manifest([flagged_ood(1), flagged_ood(2)]), evidence=make_evidence([1, 2]))
        reply = self.client(store).get("/review/flagged", params={"page": 1, "size": 1})
        assert reply.status_code == 200
        body = reply.json()
        assert body["total"] == 2
        assert len(body["items"]) == 1

    def test_item_endpoint(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]), evidence=make_evidence([1]))
        reply = self.client(store).get("/review/item/1")
        assert reply.status_code == 200
        assert reply.json()["annotation_id"] == 1

    def test_item_404(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        assert self.client(store).get("/review/item/99").status_code == 404

    def test_decision_endpoint(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        reply = self.client(store).post(
            "/review/decision",
            json={"annotation_id": 1, "verdict": "reassign_id", "new_class": "Car", "reviewer": "kim"},
        )
        assert reply.status_code == 200
        body = reply.json()
        assert body["category"] == "Car"
        assert body["audit_state"] == "human_resolved"
        assert store.history[0]["reviewer"] == "kim"

    def test_decision_validation(self):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        client = self.client(store)
        assert client.post(
            "/review/decision", json={"annotation_id": 1, "verdict": "nuke"}
        ).status_code == 400
        assert client.post(
            "/review/decision", json={"annotation_id": 1, "verdict": "reassign_id", "new_class": "x"}
        ).status_code == 400
        assert client.post(
            "/review/decision", json={"annotation_id": 9, "verdict": "discard"}
        ).status_code == 404

    def test_export_endpoint(self, tmp_path):
        store = ReviewStore(make_manifest([flagged_ood(1)]))
        out = tmp_path / "exported.json"
        reply = self.client(store).post("/review/export", json={"out": str(out)})
        assert reply.status_code == 200
        assert out.exists()
        assert reply.json()["annotations"] == 1

    def test_image_endpoints(self, tmp_path):
        import numpy as np
        from PIL import Image

        img_path = tmp_path / "images" / "a.png"
        img_path.parent.mkdir(parents=True)
        Image.fromarray(np.zeros((200, 300, 3), dtype=np.uint8)).save(img_path)
        manifest = DatasetManifest(
            images=(ImageRecord(image_id=1, width=300, height=200, file_path="images/a.png"),),
            annotations=(
                Annotation(
                    id=1, image_id=1, bbox=BBox(120, 80, 30, 20),
                    category_index=REGISTRY.ood_index,
                    provenance=Provenance.INPAINTED_OOD, prompt_used="tiger",
                    audit_state=AuditState.AMBIGUOUS,
                ),
            ),
            registry=REGISTRY,
        )
        store = ReviewStore(manifest, base_dir=tmp_path)
        client = self.client(store)

        full = client.get("/review/item/1/image/full")
        assert full.status_code == 200
        assert full.headers["content-type"] == "image/png"

        crop = client.get("/review/item/1/image/crop")
        assert crop.status_code == 200
        left, top = map(int, crop.headers["x-crop-origin"].split(","))
        assert left >= 0 and top >= 0
        with Image.open(__import__("io").BytesIO(crop.content)) as im:
            # crop contains the whole box once the origin shift is applied
            assert left + im.width >= 150 and top + im.height >= 100

    def test_image_404_when_missing(self):
        store = ReviewStore(make_manifest([flagged_ood(1)], file_path="absent/nope.png"))
        assert self.client(store).get("/review/item/1/image/full").status_code == 404

    def test_image_source_pane(self, tmp_path):
        import numpy as np
        from PIL import Image

        (tmp_path / "images").mkdir()
        Image.fromarray(np.zeros((200, 300, 3), dtype=np.uint8)).save(tmp_path / "images" / "a_syn.png")
        Image.fromarray(np.full((200, 300, 3), 255, dtype=np.uint8)).save(tmp_path / "images" / "a.png")
        manifest = DatasetManifest(
            images=(
                ImageRecord(
                    image_id=1, width=300, height=200,
                    file_path="images/a_syn.png", source_path="images/a.png",
                ),
            ),
            annotations=(flagged_ood(1),),
            registry=REGISTRY,
        )
        store = ReviewStore(manifest, base_dir=tmp_path)
        client = self.client(store)

        assert client.get("/review/item/1").json()["image"]["has_source"] is True

        edited = client.get("/review/item/1/image/full")
        original = client.get("/review/item/1/image/full", params={"source": "original"})
        assert edited.content != original.content
        with Image.open(io.BytesIO(original.content)) as im:
            assert im.convert("RGB").getpixel((0, 0)) == (255, 255, 255)

        # both panes crop the same window so they stay aligned
        ce = client.get("/review/item/1/image/crop")
        co = client.get("/review/item/1/image/crop", params={"source": "original"})
        assert ce.headers["x-crop-origin"] == co.headers["x-crop-origin"]

        assert client.get("/review/item/1/image/full", params={"source": "both"}).status_code == 400

    def test_image_source_falls_back_without_lineage(self, tmp_path):
        import numpy as np
        from PIL import Image

        Image.fromarray(np.zeros((50, 50, 3), dtype=np.uint8)).save(tmp_path / "a.png")
        store = ReviewStore(make_manifest([flagged_ood(1)]), base_dir=tmp_path)
        client = self.client(store)
        assert client.get("/review/item/1").json()["image"]["has_source"] is False
        edited = client.get("/review/item/1/image/full")
        original = client.get("/review/item/1/image/full", params={"source": "original"})
        assert original.content == edited.content
