#!/usr/bin/env python3
# Copyright 2026 The lowrank Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the bundled training corpus: short seeded-grammar stories.

The output is fully determined by --seed, so the file in data/ can always be
regenerated bit-for-bit. Text produced here is dedicated to the public domain.
"""

import argparse
import random

NAMES = ["Anna", "Ben", "Clara", "David", "Ella", "Frank", "Grace", "Henry",
         "Iris", "Jack", "Kate", "Leo", "Mia", "Noah", "Olive", "Peter",
         "Rose", "Sam", "Tom", "Vera"]
PLACES = ["the river", "the market", "the old mill", "the forest", "the hill",
          "the harbor", "the school", "the garden", "the bridge", "the farm",
          "the village", "the station", "the library", "the field"]
ANIMALS = ["dog", "cat", "horse", "goat", "fox", "bird", "cow", "rabbit",
           "duck", "sheep"]
OBJECTS = ["a basket", "a letter", "a lamp", "a small box", "a red coat",
           "a map", "a loaf of bread", "a blue hat", "a wooden spoon",
           "a silver key", "a bag of apples", "a rope", "a book"]
ADJ = ["old", "young", "quiet", "happy", "tired", "kind", "brave", "clever",
       "careful", "hungry"]
WEATHER = ["The sun was warm", "The rain fell all day", "The wind was cold",
           "The sky was clear", "A thick fog covered the hills",
           "Snow lay on the roofs"]
TIMES = ["In the morning", "At noon", "In the evening", "Late at night",
         "On the next day", "After supper", "Before dawn"]
MOTION = ["walked to", "ran to", "went to", "rode to", "hurried to",
          "came back from", "looked around"]
FEEL = ["glad", "sad", "afraid", "surprised", "calm", "worried", "proud"]
SAY = ["said", "asked", "answered", "whispered", "called"]
WANT = ["find", "buy", "carry", "fix", "sell", "hide", "keep"]


def sentence(rng, cast):
    a, b = rng.sample(cast, 2)
    kind = rng.randrange(10)
    if kind == 0:
        return f"{rng.choice(WEATHER)}."
    if kind == 1:
        return (f"{rng.choice(TIMES)}, {a} {rng.choice(MOTION)} "
                f"{rng.choice(PLACES)}.")
    if kind == 2:
        return (f"{a} wanted to {rng.choice(WANT)} {rng.choice(OBJECTS)} "
                f"for {b}.")
    if kind == 3:
        return (f"\"Where is the {rng.choice(ANIMALS)}?\" "
                f"{rng.choice(SAY)} {a}.")
    if kind == 4:
        return (f"\"It is near {rng.choice(PLACES)},\" "
                f"{rng.choice(SAY)} {b}.")
    if kind == 5:
        return f"{a} felt {rng.choice(FEEL)} when {b} came home."
    if kind == 6:
        return (f"The {rng.choice(ADJ)} {rng.choice(ANIMALS)} followed "
                f"{a} to {rng.choice(PLACES)}.")
    if kind == 7:
        return (f"{b} gave {a} {rng.choice(OBJECTS)} and "
                f"{rng.choice(OBJECTS)}.")
    if kind == 8:
        return (f"{a} and {b} sat by {rng.choice(PLACES)} and talked "
                f"about the {rng.choice(ANIMALS)}.")
    return (f"{a} was {rng.choice(ADJ)}, so {b} {rng.choice(MOTION)} "
            f"{rng.choice(PLACES)} alone.")


def story(rng):
    cast = rng.sample(NAMES, 3)
    lines = [f"{cast[0]} lived near {rng.choice(PLACES)} with a "
             f"{rng.choice(ADJ)} {rng.choice(ANIMALS)}."]
    for _ in range(rng.randint(4, 9)):
        lines.append(sentence(rng, cast))
    lines.append(f"In the end, {cast[0]} and {cast[1]} were "
                 f"{rng.choice(FEEL)}.")
    return " ".join(lines)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=20260101)
    parser.add_argument("--bytes", type=int, default=393216)
    parser.add_argument("--out", default="data/corpus.txt")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    parts = []
    size = 0
    while size < args.bytes:
        text = story(rng) + "\n\n"
        parts.append(text)
        size += len(text)
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write("".join(parts))


if __name__ == "__main__":
    main()
