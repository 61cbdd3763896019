#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "ltqa/dataset.hpp"

namespace ltqa {

std::vector<QAInstance> mix(std::span<const WeightedSource> sources, std::uint64_t seed) {
  bool any_positive = false;
  for (const auto& source : sources) {
    if (source.weight < Ratio(0, 1)) throw ValidationError("mixing weights must be non-negative");
    if (source.weight > Ratio(0, 1) && !source.instances.empty()) any_positive = true;
  }
  if (!any_positive) throw ValidationError("mix needs at least one non-empty source with positive weight");

  Rng rng(seed);
  std::vector<QAInstance> out;
  for (const auto& source : sources) {
    const auto n = static_cast<std::int64_t>(source.instances.size());
    if (n == 0) continue;
    const std::int64_t target = round_product(source.weight, n);
    for (std::int64_t copy = 0; copy < target / n; ++copy) {
      out.insert(out.end(), source.instances.begin(), source.instances.end());
    }
    const std::int64_t remainder = target % n;
    if (remainder > 0) {
      std::vector<std::size_t> order(source.instances.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(order));
      order.resize(static_cast<std::size_t>(remainder));
      std::sort(order.begin(), order.end());
      for (auto idx : order) out.push_back(source.instances[idx]);
    }
  }
  rng.shuffle(std::span<QAInstance>(out));
  return out;
}

TrainValSplit split_train_val(std::span<const QAInstance> instances, const Ratio& val_fraction,
                              std::uint64_t seed) {
  if (val_fraction <= Ratio(0, 1) || val_fraction >= Ratio(1, 1)) {
    throw ValidationError("validation fraction must lie strictly between 0 and 1");
  }
  if (instances.size() < 2) throw ValidationError("need at least 2 instances to split");

  // Groups in order of first appearance.
  std::map<std::string, std::size_t> group_index;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto [it, inserted] = group_index.try_emplace(instances[i].group.value, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  if (groups.size() < 2) throw ValidationError("cannot split: all instances share one group");

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto total = static_cast<std::int64_t>(instances.size());
  const std::int64_t target = round_product(val_fraction, total);
  std::vector<bool> in_val(groups.size(), false);
  std::int64_t val_size = 0;
  for (auto g : order) {
    const auto size = static_cast<std::int64_t>(groups[g].size());
    if (val_size + size <= target) {
      in_val[g] = true;
      val_size += size;
    }
  }
  // Overshoot by one group when that lands closer to the target.
  if (val_size < target) {
    for (auto g : order) {
      if (in_val[g]) continue;
      const auto size = static_cast<std::int64_t>(groups[g].size());
      if (val_size + size - target < target - val_size) {
        in_val[g] = true;
        val_size += size;
      }
      break;
    }
  }
  if (val_size == 0) in_val[order.front()] = true;
  if (std::all_of(in_val.begin(), in_val.end(), [](bool v) { return v; })) in_val[order.back()] = false;

  TrainValSplit split;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (in_val[group_index.at(instances[i].group.value)]) {
      split.val.push_back(instances[i]);
    } else {
      split.train.push_back(instances[i]);
    }
  }
  return split;
}

void DatasetStats::add(std::span<const QAInstance> instances, std::string_view split) {
  for (const auto& instance : instances) {
    ++counts_[{instance.source, instance.subtask, std::string(split)}];
  }
}

std::size_t DatasetStats::count(Source source, Subtask subtask, std::string_view split) const {
  auto it = counts_.find({source, subtask, std::string(split)});
  return it == counts_.end() ? 0 : it->second;
}

std::size_t DatasetStats::total() const {
  std::size_t sum = 0;
  for (const auto& [key, n] : counts_) sum += n;
  return sum;
}

std::string DatasetStats::render() const {
  std::ostringstream out;
  out << "source        subtask   split       count\n";
  for (const auto& [key, n] : counts_) {
    const auto& [source, subtask, split] = key;
    char line[128];
    std::snprintf(line, sizeof(line), "%-13s %-9s %-11s %5zu\n", std::string(to_string(source)).c_str(),
                  std::string(to_string(subtask)).c_str(), split.c_str(), n);
    out << line;
  }
  return out.str();
}

nlohmann::json DatasetStats::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& [key, n] : counts_) {
    const auto& [source, subtask, split] = key;
    rows.push_back({{"source", to_string(source)}, {"subtask", to_string(subtask)}, {"split", split}, {"count", n}});
  }
  return rows;
}

}  // namespace ltqa
