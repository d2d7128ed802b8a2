// Copyright 2026 The R2D2 Engine Authors.
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

#include "r2d2/ext_reader.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "r2d2/errors.h"

namespace r2d2 {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogSumExp(std::span<const double> values) {
  double max = kNegInf;
  for (double v : values) max = std::max(max, v);
  if (max == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

// Last index of the contiguous CONTEXT run containing each position.
std::vector<size_t> RunEnds(const std::vector<uint8_t>& mask) {
  std::vector<size_t> run_end(mask.size(), 0);
  size_t i = mask.size();
  size_t current = 0;
  while (i-- > 0) {
    if (!mask[i]) continue;
    current = (i + 1 < mask.size() && mask[i + 1]) ? run_end[i + 1] : i;
    run_end[i] = current;
  }
  return run_end;
}

bool InSupport(const std::vector<uint8_t>& mask, size_t t) {
  return t < mask.size() && mask[t] != 0;
}

// -log sum_{i in targets} p_i and its gradient w.r.t. the logits behind
// `log_probs`. `targets` index into the flattened support.
double MarginalTerm(const std::vector<const double*>& log_probs,
                    const std::vector<size_t>& targets,
                    const std::vector<double*>& grads) {
  std::vector<double> target_logs;
  target_logs.reserve(targets.size());
  for (size_t t : targets) target_logs.push_back(*log_probs[t]);
  const double lse_targets = LogSumExp(target_logs);
  for (size_t i = 0; i < log_probs.size(); ++i) *grads[i] = std::exp(*log_probs[i]);
  for (size_t t : targets) *grads[t] -= std::exp(*log_probs[t] - lse_targets);
  return -lse_targets;
}

}  // namespace

void EncoderOutput::Validate() const {
  const size_t t = tokens();
  if (t == 0 || kinds[0] != TokenKind::kCls) {
    Fail(ErrorCode::kInvalidArgument, "encoder output must start with CLS");
  }
  for (size_t i = 1; i < t; ++i) {
    if (kinds[i] == TokenKind::kCls) {
      Fail(ErrorCode::kInvalidArgument, "encoder output has a second CLS");
    }
  }
  if (t > kMaxEncoderTokens) {
    Fail(ErrorCode::kInvalidArgument,
         "encoder output has " + std::to_string(t) + " tokens (max 512)");
  }
  if (hidden_dim == 0 || hidden.size() != t * hidden_dim ||
      token_to_char.size() != t) {
    Fail(ErrorCode::kDimensionMismatch, "encoder output sizes are inconsistent");
  }
  for (float v : hidden) {
    if (!std::isfinite(v)) Fail(ErrorCode::kInvalidArgument, "non-finite hidden state");
  }
}

ReaderHeads ReaderHeads::Zeros(size_t hidden_dim) {
  ReaderHeads heads;
  heads.hidden_dim = hidden_dim;
  heads.w_start.assign(hidden_dim, 0.0);
  heads.w_end.assign(hidden_dim, 0.0);
  heads.w_joint.assign(hidden_dim * hidden_dim, 0.0);
  heads.b_joint.assign(hidden_dim, 0.0);
  heads.w_passage.assign(hidden_dim, 0.0);
  return heads;
}

void ReaderHeads::Validate() const {
  const size_t h = hidden_dim;
  if (h == 0 || w_start.size() != h || w_end.size() != h ||
      w_joint.size() != h * h || b_joint.size() != h || w_passage.size() != h) {
    Fail(ErrorCode::kDimensionMismatch, "reader head shapes do not match hidden_dim");
  }
  for (const auto* v : {&w_start, &w_end, &w_joint, &b_joint, &w_passage}) {
    for (double x : *v) {
      if (!std::isfinite(x)) Fail(ErrorCode::kInvalidArgument, "non-finite head weight");
    }
  }
}

ScoreSet ComputeScores(const EncoderOutput& enc, const ReaderHeads& heads,
                       size_t max_span_len) {
  enc.Validate();
  heads.Validate();
  if (enc.hidden_dim != heads.hidden_dim) {
    Fail(ErrorCode::kDimensionMismatch,
         "encoder hidden size " + std::to_string(enc.hidden_dim) +
             " != head size " + std::to_string(heads.hidden_dim));
  }
  if (max_span_len == 0) Fail(ErrorCode::kInvalidArgument, "max_span_len must be > 0");
  const size_t t_count = enc.tokens();
  const size_t h = enc.hidden_dim;

  auto dot = [h](std::span<const float> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < h; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
  };

  ScoreSet out;
  out.passage_id = enc.passage_id;
  out.band = max_span_len;
  out.start.resize(t_count);
  out.end.resize(t_count);
  out.joint.assign(t_count * max_span_len, 0.0);
  std::vector<double> projected(h);
  for (size_t s = 0; s < t_count; ++s) {
    const auto hs = enc.row(s);
    out.start[s] = dot(hs, heads.w_start);
    out.end[s] = dot(hs, heads.w_end);
    for (size_t r = 0; r < h; ++r) {
      projected[r] = heads.b_joint[r] +
                     dot(hs, std::span<const double>(heads.w_joint).subspan(r * h, h));
    }
    const size_t last = std::min(t_count, s + max_span_len);
    for (size_t e = s; e < last; ++e) out.Joint(s, e) = dot(enc.row(e), projected);
  }
  out.passage = dot(enc.row(0), heads.w_passage);
  return out;
}

std::vector<uint8_t> ContextMask(std::span<const TokenKind> kinds) {
  std::vector<uint8_t> mask(kinds.size());
  for (size_t i = 0; i < kinds.size(); ++i) mask[i] = kinds[i] == TokenKind::kContext;
  return mask;
}

bool Distributions::InJointSupport(size_t p, size_t s, size_t e) const {
  const auto& mask = masks[p];
  if (s > e || e - s >= band || !InSupport(mask, s) || !InSupport(mask, e)) {
    return false;
  }
  for (size_t i = s; i <= e; ++i) {
    if (!mask[i]) return false;
  }
  return true;
}

double Distributions::LogJoint(size_t p, size_t s, size_t e) const {
  return log_joint[p][s * band + (e - s)];
}

Distributions Normalize(std::span<const ScoreSet> score_sets,
                        std::span<const std::vector<uint8_t>> context_masks) {
  if (score_sets.empty()) Fail(ErrorCode::kInvalidArgument, "no passages to normalize");
  if (score_sets.size() != context_masks.size()) {
    Fail(ErrorCode::kDimensionMismatch, "one context mask per passage required");
  }
  Distributions dist;
  dist.band = score_sets[0].band;
  for (size_t p = 0; p < score_sets.size(); ++p) {
    const ScoreSet& set = score_sets[p];
    if (set.band != dist.band) Fail(ErrorCode::kInvalidArgument, "mixed band widths");
    if (context_masks[p].size() != set.tokens() || set.end.size() != set.tokens() ||
        set.joint.size() != set.tokens() * set.band) {
      Fail(ErrorCode::kDimensionMismatch, "score set and mask sizes disagree");
    }
    dist.passage_ids.push_back(set.passage_id);
    dist.masks.push_back(context_masks[p]);
    dist.log_start.emplace_back(set.tokens(), kNegInf);
    dist.log_end.emplace_back(set.tokens(), kNegInf);
    dist.log_joint.emplace_back(set.joint.size(), kNegInf);
    dist.log_passage.push_back(set.passage);
  }

  // Gather the supports, then normalize each pooled vector in place.
  std::vector<double> starts, ends, joints;
  for (size_t p = 0; p < score_sets.size(); ++p) {
    const ScoreSet& set = score_sets[p];
    const auto& mask = dist.masks[p];
    const std::vector<size_t> run_end = RunEnds(mask);
    for (size_t s = 0; s < set.tokens(); ++s) {
      if (!mask[s]) continue;
      starts.push_back(set.start[s]);
      ends.push_back(set.end[s]);
      const size_t last = std::min(run_end[s], s + set.band - 1);
      for (size_t e = s; e <= last; ++e) joints.push_back(set.Joint(s, e));
    }
  }
  if (starts.empty() || joints.empty()) {
    Fail(ErrorCode::kInvalidArgument, "empty span support after masking");
  }
  const double lse_start = LogSumExp(starts);
  const double lse_end = LogSumExp(ends);
  const double lse_joint = LogSumExp(joints);
  const double lse_passage = LogSumExp(dist.log_passage);

  for (size_t p = 0; p < score_sets.size(); ++p) {
    const ScoreSet& set = score_sets[p];
    const auto& mask = dist.masks[p];
    const std::vector<size_t> run_end = RunEnds(mask);
    for (size_t s = 0; s < set.tokens(); ++s) {
      if (!mask[s]) continue;
      dist.log_start[p][s] = set.start[s] - lse_start;
      dist.log_end[p][s] = set.end[s] - lse_end;
      const size_t last = std::min(run_end[s], s + set.band - 1);
      for (size_t e = s; e <= last; ++e) {
        dist.log_joint[p][s * set.band + (e - s)] = set.Joint(s, e) - lse_joint;
      }
    }
    dist.log_passage[p] -= lse_passage;
  }
  return dist;
}

Factorization Factorization::Parse(const std::string& label) {
  Factorization f;
  for (char c : label) {
    switch (c) {
      case 'I': case 'i': f.independent = true; break;
      case 'J': case 'j': f.joint = true; break;
      case 'C': case 'c': f.passage = true; break;
      case '+': case ' ': case ',': break;
      default:
        Fail(ErrorCode::kInvalidArgument, "unknown factor '" + std::string(1, c) +
                                              "' in factorization " + label);
    }
  }
  if (f.empty()) Fail(ErrorCode::kInvalidArgument, "empty factorization");
  return f;
}

std::string Factorization::Label() const {
  std::string out;
  auto add = [&out](const char* part) {
    if (!out.empty()) out += '+';
    out += part;
  };
  if (independent) add("I");
  if (joint) add("J");
  if (passage) add("C");
  return out;
}

std::vector<AnswerSpan> DecodeSpans(const Distributions& dist,
                                    const Factorization& factorization,
                                    size_t top_m, size_t max_span_len,
                                    SpanScoreMode mode) {
  if (factorization.empty()) Fail(ErrorCode::kInvalidArgument, "empty factorization");
  if (top_m == 0) Fail(ErrorCode::kInvalidArgument, "M must be >= 1");
  if (max_span_len == 0 || max_span_len > dist.band) {
    Fail(ErrorCode::kInvalidArgument,
         "max_span_len must be in [1, " + std::to_string(dist.band) + "]");
  }

  struct Candidate {
    double score;
    size_t passage;
    size_t start;
    size_t end;
  };
  std::vector<Candidate> candidates;
  for (size_t p = 0; p < dist.passages(); ++p) {
    const auto& mask = dist.masks[p];
    const std::vector<size_t> run_end = RunEnds(mask);
    for (size_t s = 0; s < mask.size(); ++s) {
      if (!mask[s]) continue;
      const size_t last = std::min(run_end[s], s + max_span_len - 1);
      for (size_t e = s; e <= last; ++e) {
        double score = 0.0;
        if (factorization.independent) score += dist.log_start[p][s] + dist.log_end[p][e];
        if (factorization.joint) score += dist.LogJoint(p, s, e);
        if (factorization.passage) score += dist.log_passage[p];
        candidates.push_back({score, p, s, e});
      }
    }
  }

  double offset = 0.0;
  if (mode == SpanScoreMode::kNormalizedProduct) {
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const Candidate& c : candidates) scores.push_back(c.score);
    offset = LogSumExp(scores);
  }

  auto better = [&dist](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    const PassageId pa = dist.passage_ids[a.passage];
    const PassageId pb = dist.passage_ids[b.passage];
    if (pa != pb) return pa < pb;
    if (a.passage != b.passage) return a.passage < b.passage;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  };
  const size_t keep = std::min(top_m, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<ptrdiff_t>(keep),
                    candidates.end(), better);

  std::vector<AnswerSpan> out;
  out.reserve(keep);
  for (size_t i = 0; i < keep; ++i) {
    const Candidate& c = candidates[i];
    AnswerSpan span;
    span.passage_id = dist.passage_ids[c.passage];
    span.passage_index = c.passage;
    span.start_tok = c.start;
    span.end_tok = c.end;
    span.logp_e = c.score - offset;
    out.push_back(std::move(span));
  }
  return out;
}

void AttachSpanText(std::span<AnswerSpan> spans,
                    std::span<const EncoderOutput> encoder_outputs,
                    const PassageStore& store) {
  for (AnswerSpan& span : spans) {
    if (span.passage_index >= encoder_outputs.size()) {
      Fail(ErrorCode::kLookup, "span refers to a missing encoder output");
    }
    const EncoderOutput& enc = encoder_outputs[span.passage_index];
    const auto& first = enc.token_to_char.at(span.start_tok);
    const auto& last = enc.token_to_char.at(span.end_tok);
    if (!first || !last) {
      Fail(ErrorCode::kInvalidArgument, "span token has no character offsets");
    }
    const std::string& context = store.at(span.passage_id).context;
    if (last->end > context.size() || first->begin > last->end) {
      Fail(ErrorCode::kInvalidArgument, "span offsets fall outside the context");
    }
    span.text = context.substr(first->begin, last->end - first->begin);
  }
}

ReaderTargets ToEncoderTargets(const ExampleAnnotation& annotation,
                               std::span<const EncoderOutput> encoder_outputs) {
  std::vector<size_t> offsets;
  offsets.reserve(encoder_outputs.size());
  for (const EncoderOutput& enc : encoder_outputs) {
    const auto it = std::find(enc.kinds.begin(), enc.kinds.end(), TokenKind::kContext);
    offsets.push_back(static_cast<size_t>(it - enc.kinds.begin()));
  }
  auto shift = [&](size_t passage, size_t token) {
    if (passage >= encoder_outputs.size()) {
      Fail(ErrorCode::kInvalidAnnotation, "annotation passage index out of range");
    }
    const size_t pos = offsets[passage] + token;
    if (pos >= encoder_outputs[passage].tokens() ||
        encoder_outputs[passage].kinds[pos] != TokenKind::kContext) {
      Fail(ErrorCode::kInvalidAnnotation, "annotation falls outside the context");
    }
    return pos;
  };
  ReaderTargets out;
  for (const TokenPos& t : annotation.starts) {
    out.starts.push_back({t.passage_index, shift(t.passage_index, t.token)});
  }
  for (const TokenPos& t : annotation.ends) {
    out.ends.push_back({t.passage_index, shift(t.passage_index, t.token)});
  }
  for (const Boundary& b : annotation.boundaries) {
    out.boundaries.push_back({b.passage_index, shift(b.passage_index, b.start),
                              shift(b.passage_index, b.end)});
  }
  out.positive_passages = annotation.positive_passages;
  return out;
}

ReaderLoss ComputeReaderLoss(const Distributions& dist, const ReaderTargets& targets) {
  const size_t v = dist.passages();
  if (targets.starts.empty() || targets.ends.empty() || targets.boundaries.empty() ||
      targets.positive_passages.empty()) {
    Fail(ErrorCode::kInvalidAnnotation, "every target set must be non-empty");
  }

  ReaderLoss out;
  ScoreGradients& g = out.grads;
  g.passage.assign(v, 0.0);
  for (size_t p = 0; p < v; ++p) {
    g.start.emplace_back(dist.log_start[p].size(), 0.0);
    g.end.emplace_back(dist.log_end[p].size(), 0.0);
    g.joint.emplace_back(dist.log_joint[p].size(), 0.0);
  }

  // Flatten a per-token distribution's support and locate the targets.
  auto token_term = [&](const std::vector<std::vector<double>>& logs,
                        std::vector<std::vector<double>>& grads,
                        const std::vector<TokenPos>& positions) {
    std::set<TokenPos> unique(positions.begin(), positions.end());
    std::vector<const double*> support;
    std::vector<double*> grad_slots;
    std::vector<size_t> target_indices;
    for (size_t p = 0; p < v; ++p) {
      for (size_t t = 0; t < logs[p].size(); ++t) {
        if (!dist.masks[p][t]) continue;
        if (unique.contains({p, t})) target_indices.push_back(support.size());
        support.push_back(&logs[p][t]);
        grad_slots.push_back(&grads[p][t]);
      }
    }
    if (target_indices.size() != unique.size()) {
      Fail(ErrorCode::kInvalidAnnotation, "token target outside the support");
    }
    return MarginalTerm(support, target_indices, grad_slots);
  };
  out.start_term = token_term(dist.log_start, g.start, targets.starts);
  out.end_term = token_term(dist.log_end, g.end, targets.ends);

  {
    std::set<Boundary> unique(targets.boundaries.begin(), targets.boundaries.end());
    for (const Boundary& b : unique) {
      if (b.passage_index >= v || !dist.InJointSupport(b.passage_index, b.start, b.end)) {
        Fail(ErrorCode::kInvalidAnnotation, "boundary target outside the support");
      }
    }
    std::vector<const double*> support;
    std::vector<double*> grad_slots;
    std::vector<size_t> target_indices;
    for (size_t p = 0; p < v; ++p) {
      const size_t t_count = dist.tokens(p);
      for (size_t s = 0; s < t_count; ++s) {
        for (size_t e = s; e < std::min(t_count, s + dist.band); ++e) {
          if (!dist.InJointSupport(p, s, e)) continue;
          if (unique.contains({p, s, e})) target_indices.push_back(support.size());
          const size_t slot = s * dist.band + (e - s);
          support.push_back(&dist.log_joint[p][slot]);
          grad_slots.push_back(&g.joint[p][slot]);
        }
      }
    }
    out.joint_term = MarginalTerm(support, target_indices, grad_slots);
  }

  {
    std::set<size_t> unique(targets.positive_passages.begin(),
                            targets.positive_passages.end());
    std::vector<const double*> support;
    std::vector<double*> grad_slots;
    std::vector<size_t> target_indices;
    for (size_t p = 0; p < v; ++p) {
      if (unique.contains(p)) target_indices.push_back(p);
      support.push_back(&dist.log_passage[p]);
      grad_slots.push_back(&g.passage[p]);
    }
    if (target_indices.size() != unique.size()) {
      Fail(ErrorCode::kInvalidAnnotation, "positive passage index out of range");
    }
    out.passage_term = MarginalTerm(support, target_indices, grad_slots);
  }

  out.loss = out.start_term + out.end_term + out.joint_term + out.passage_term;
  return out;
}

std::vector<PassageId> PassageRerankByReader(std::span<const ScoreSet> score_sets) {
  std::vector<size_t> order(score_sets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (score_sets[a].passage != score_sets[b].passage) {
      return score_sets[a].passage > score_sets[b].passage;
    }
    return score_sets[a].passage_id < score_sets[b].passage_id;
  });
  std::vector<PassageId> out;
  out.reserve(order.size());
  for (size_t i : order) out.push_back(score_sets[i].passage_id);
  return out;
}

}  // namespace r2d2
