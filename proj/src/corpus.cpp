// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lowrank/corpus.hpp"

#include <cmath>

#include "lowrank/error.hpp"
#include "lowrank/train.hpp"

namespace lowrank {

std::vector<std::string_view> split_stories(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == '\n') ++pos;
    if (pos >= text.size()) break;
    std::size_t end = text.find("\n\n", pos);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

CorpusSplits split_corpus(std::string_view text, double train_fraction, double calib_fraction) {
  if (!(train_fraction > 0.0 && calib_fraction > 0.0 && train_fraction + calib_fraction < 1.0)) {
    throw ValidationError("split fractions must be positive and leave room for eval");
  }
  const auto stories = split_stories(text);
  if (stories.size() < 3) throw ValidationError("corpus needs at least three blank-line separated stories");
  const auto n = static_cast<double>(stories.size());
  const auto a = static_cast<std::size_t>(std::floor(n * train_fraction));
  const auto b = static_cast<std::size_t>(std::floor(n * (train_fraction + calib_fraction)));
  if (a == 0 || b <= a || b >= stories.size()) throw ValidationError("corpus too small to split");
  CorpusSplits s;
  auto join = [&](std::size_t lo, std::size_t hi) {
    std::string out;
    for (std::size_t i = lo; i < hi; ++i) {
      out += stories[i];
      out += "\n\n";
    }
    return out;
  };
  s.train = join(0, a);
  s.calibration = join(a, b);
  s.eval = join(b, stories.size());
  return s;
}

std::vector<std::vector<Token>> calibration_windows(std::string_view text, std::size_t count, std::size_t length) {
  if (count == 0 || length < 2) throw ValidationError("calibration: need count >= 1 and length >= 2");
  if (text.size() < length - 1) throw ValidationError("calibration text shorter than one window");
  const std::size_t span = text.size() - (length - 1);
  std::vector<std::vector<Token>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = count == 1 ? 0 : i * span / (count - 1);
    out.push_back(window_at(text, off, length));
  }
  return out;
}

std::vector<std::vector<Token>> story_prompts(std::string_view text, std::size_t count, std::size_t prompt_bytes) {
  std::vector<std::vector<Token>> out;
  for (std::string_view story : split_stories(text)) {
    if (out.size() == count) break;
    if (story.size() < prompt_bytes) continue;
    out.push_back(tokenizer::encode(story.substr(0, prompt_bytes)));
  }
  if (out.size() < count) {
    throw ValidationError("only " + std::to_string(out.size()) + " stories hold a " + std::to_string(prompt_bytes) +
                          "-byte prompt; " + std::to_string(count) + " requested");
  }
  return out;
}

}  // namespace lowrank
