#include "machstate/kernels.hpp"

namespace machstate {

void BoxSet::push_back(std::span<const Interval> intervals) {
  if (intervals.size() != dims) throw Error("box dimension mismatch");
  for (const auto& iv : intervals) {
    low.push_back(iv.low);
    high.push_back(iv.high);
  }
  ++count;
}

bool BoxSet::contains(std::size_t box, std::span<const double> x) const {
  const double* lo = low.data() + box * dims;
  const double* hi = high.data() + box * dims;
  for (std::size_t c = 0; c < dims; ++c) {
    if (!(x[c] > lo[c] && x[c] <= hi[c])) return false;
  }
  return true;
}

namespace kernels {

MatchCounts count_box_matches(const BoxSet& boxes, const LabeledMatrix& data, int target_label,
                              Exec exec) {
  if (boxes.size() > 0 && boxes.dims != data.cols()) throw Error("box/data dimension mismatch");
  const auto nb = static_cast<std::int64_t>(boxes.size());
  MatchCounts out{std::vector<std::int64_t>(boxes.size(), 0),
                  std::vector<std::int64_t>(boxes.size(), 0)};

  auto count_one = [&](std::int64_t b) {
    std::int64_t pop = 0;
    std::int64_t tgt = 0;
    for (std::size_t r = 0; r < data.rows; ++r) {
      if (boxes.contains(static_cast<std::size_t>(b), data.row(r))) {
        ++pop;
        if (data.labels[r] == target_label) ++tgt;
      }
    }
    out.popularity[static_cast<std::size_t>(b)] = pop;
    out.target[static_cast<std::size_t>(b)] = tgt;
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < nb; ++b) count_one(b);
  } else {
    for (std::int64_t b = 0; b < nb; ++b) count_one(b);
  }
  return out;
}

std::vector<std::int32_t> row_coverage(const BoxSet& boxes, const LabeledMatrix& data, Exec exec) {
  const auto nr = static_cast<std::int64_t>(data.rows);
  std::vector<std::int32_t> cover(data.rows, 0);
  auto cover_one = [&](std::int64_t r) {
    std::int32_t n = 0;
    auto row = data.row(static_cast<std::size_t>(r));
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (boxes.contains(b, row)) ++n;
    }
    cover[static_cast<std::size_t>(r)] = n;
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < nr; ++r) cover_one(r);
  } else {
    for (std::int64_t r = 0; r < nr; ++r) cover_one(r);
  }
  return cover;
}

MatchCounts count_pair_matches(const BoxSet& status_boxes, const LabeledMatrix& status,
                               const BoxSet& settings_boxes, const LabeledMatrix& settings,
                               int target_label, Exec exec) {
  if (status.rows != settings.rows) throw Error("status/settings row count mismatch");
  const std::size_t nu = status_boxes.size();
  const std::size_t nw = settings_boxes.size();
  const std::size_t pairs = nu * nw;
  MatchCounts out{std::vector<std::int64_t>(pairs, 0), std::vector<std::int64_t>(pairs, 0)};

  if (exec == Exec::serial) {
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t w = 0; w < nw; ++w) {
        std::int64_t pop = 0;
        std::int64_t tgt = 0;
        for (std::size_t r = 0; r < status.rows; ++r) {
          if (status_boxes.contains(u, status.row(r)) && settings_boxes.contains(w, settings.row(r))) {
            ++pop;
            if (status.labels[r] == target_label) ++tgt;
          }
        }
        out.popularity[u * nw + w] = pop;
        out.target[u * nw + w] = tgt;
      }
    }
    return out;
  }

  const auto nr = static_cast<std::int64_t>(status.rows);
#pragma omp parallel
  {
    std::vector<std::int64_t> pop(pairs, 0);
    std::vector<std::int64_t> tgt(pairs, 0);
    std::vector<std::size_t> us;
    std::vector<std::size_t> ws;
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < nr; ++r) {
      auto ri = static_cast<std::size_t>(r);
      us.clear();
      ws.clear();
      for (std::size_t u = 0; u < nu; ++u) {
        if (status_boxes.contains(u, status.row(ri))) us.push_back(u);
      }
      if (us.empty()) continue;
      for (std::size_t w = 0; w < nw; ++w) {
        if (settings_boxes.contains(w, settings.row(ri))) ws.push_back(w);
      }
      bool hit = status.labels[ri] == target_label;
      for (auto u : us) {
        for (auto w : ws) {
          ++pop[u * nw + w];
          if (hit) ++tgt[u * nw + w];
        }
      }
    }
#pragma omp critical(machstate_pair_merge)
    {
      for (std::size_t i = 0; i < pairs; ++i) {
        out.popularity[i] += pop[i];
        out.target[i] += tgt[i];
      }
    }
  }
  return out;
}

}  // namespace kernels
}  // namespace machstate
