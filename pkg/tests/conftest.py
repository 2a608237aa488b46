from __future__ import annotations

import pytest
from hypothesis import settings

from endokit.manifest import FrameRecord, Manifest

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


def manifest_from_masks(masks, video_id="v001", prefix="f"):
    """Build an in-memory manifest from a list of label bit masks."""
    records = [
        FrameRecord(f"{prefix}{i:06d}", video_id, i, mask) for i, mask in enumerate(masks)
    ]
    return Manifest(records)


@pytest.fixture
def tmp_text_file(tmp_path):
    def write(name, content):
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return str(path)

    return write
