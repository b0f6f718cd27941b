"""Writes coco_fixture.json and the mean MC expected for it.

The expected value is computed here with statistics.correlation, independently
of the C++ implementation. Run from this directory:  python3 make_fixture.py
"""

import json
import math
import random
import statistics

rng = random.Random(20240611)
images = []
annotations = []
ann_id = 1


def add(image_id, bbox):
    global ann_id
    annotations.append({"id": ann_id, "image_id": image_id, "bbox": bbox, "category_id": 1})
    ann_id += 1


for image_id in range(1, 101):
    width, height = rng.choice([(640, 480), (800, 600), (1024, 768)])
    images.append({"id": image_id, "width": width, "height": height, "file_name": f"{image_id:06d}.jpg"})
    kind = image_id % 10
    if kind == 0:
        continue
    if kind == 1:
        add(image_id, [rng.uniform(0, 400), rng.uniform(0, 300), rng.uniform(5, 200), rng.uniform(5, 200)])
        continue
    count = rng.randint(2, 9)
    if kind == 2:
        base = [rng.uniform(50, 300), rng.uniform(50, 200), rng.uniform(20, 100), rng.uniform(20, 100)]
        for _ in range(count):
            a = rng.uniform(0.5, 2.0)
            add(image_id, [a * v for v in base])
        continue
    for _ in range(count):
        x = round(rng.uniform(0, width - 10), 2)
        y = round(rng.uniform(0, height - 10), 2)
        w = round(rng.uniform(2, min(300, width - x)), 2)
        h = round(rng.uniform(2, min(300, height - y)), 2)
        add(image_id, [x, y, w, h])
    if kind == 3:
        add(image_id, [10.0, 10.0, 0.0, 5.0])

doc = {"images": images, "annotations": annotations, "categories": [{"id": 1, "name": "object"}]}


def center_size(b):
    x, y, w, h = b
    return [x + w / 2, y + h / 2, w, h]


def pearson(a, b):
    if len(set(a)) == 1 or len(set(b)) == 1:
        return None
    return statistics.correlation(a, b)


per_image = {}
for ann in annotations:
    x, y, w, h = ann["bbox"]
    if w <= 0 or h <= 0:
        continue
    per_image.setdefault(ann["image_id"], []).append(center_size(ann["bbox"]))

values = []
for image_id in sorted(per_image):
    boxes = per_image[image_id]
    n = len(boxes)
    if n < 2:
        continue
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                r = pearson(boxes[i], boxes[j])
                total += abs(r) if r is not None else 0.0
    values.append(total / (n * (n - 1)))

mean = math.fsum(values) / len(values)

with open("coco_fixture.json", "w") as f:
    json.dump(doc, f, indent=1)
    f.write("\n")
with open("coco_fixture_expected.json", "w") as f:
    json.dump({"mean_mc": mean, "n_records": len(values), "n_images": len(images),
               "n_dropped_boxes": sum(1 for a in annotations if a["bbox"][2] <= 0 or a["bbox"][3] <= 0)},
              f, indent=1)
    f.write("\n")
print(mean, len(values))
