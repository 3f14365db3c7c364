#include "prunix/metrics.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "prunix/errors.hpp"

namespace prunix {

using ordered_json = nlohmann::ordered_json;

std::string format_number(double v) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

void set_if(ordered_json& j, const char* key, double v) {
  if (MetricsRecord::is_set(v))
    j[key] = v;
  else
    j[key] = nullptr;
}

std::string csv_cell(double v) {
  return MetricsRecord::is_set(v) ? format_number(v) : std::string();
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& dir) {
  std::filesystem::create_directories(dir);
  const bool fresh = !std::filesystem::exists(dir + "/metrics.csv") ||
                     std::filesystem::file_size(dir + "/metrics.csv") == 0;
  jsonl_.open(dir + "/metrics.jsonl", std::ios::app);
  csv_.open(dir + "/metrics.csv", std::ios::app);
  if (!jsonl_ || !csv_)
    throw DataError("cannot open metrics files under " + dir);
  if (fresh)
    csv_ << "stage,epoch,train_loss,val_acc,test_acc,sparsity_pct,lambda_s,"
            "mean_gamma,level_mass,params\n";
}

void MetricsWriter::append(const MetricsRecord& rec) {
  ordered_json j;
  j["stage"] = rec.stage;
  if (rec.epoch >= 0)
    j["epoch"] = rec.epoch;
  else
    j["epoch"] = nullptr;
  set_if(j, "train_loss", rec.train_loss);
  set_if(j, "val_acc", rec.val_acc);
  set_if(j, "test_acc", rec.test_acc);
  set_if(j, "sparsity_pct", rec.sparsity_pct);
  set_if(j, "lambda_s", rec.lambda_s);
  set_if(j, "mean_gamma", rec.mean_gamma);
  set_if(j, "level_mass", rec.level_mass);
  if (!rec.params.empty()) {
    ordered_json p;
    for (const auto& [k, v] : rec.params) p[k] = v;
    j["params"] = p;
  }
  jsonl_ << j.dump() << '\n';
  jsonl_.flush();

  csv_ << rec.stage << ',' << (rec.epoch >= 0 ? std::to_string(rec.epoch) : "")
       << ',' << csv_cell(rec.train_loss) << ',' << csv_cell(rec.val_acc)
       << ',' << csv_cell(rec.test_acc) << ',' << csv_cell(rec.sparsity_pct)
       << ',' << csv_cell(rec.lambda_s) << ',' << csv_cell(rec.mean_gamma)
       << ',' << csv_cell(rec.level_mass) << ',';
  for (std::size_t i = 0; i < rec.params.size(); ++i) {
    if (i) csv_ << ';';
    csv_ << rec.params[i].first << '=' << format_number(rec.params[i].second);
  }
  csv_ << '\n';
  csv_.flush();
}

void write_sparsity_report(const std::string& dir, const SparsityReport& rep) {
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["overall_element_pct"] = rep.overall_element_pct;
  j["conv_filter_pct"] = rep.conv_filter_pct;
  ordered_json layers = ordered_json::array();
  for (const LayerSparsity& l : rep.per_layer) {
    ordered_json e;
    e["layer"] = l.name;
    e["kind"] = l.is_conv ? "conv" : "fc";
    e["element_pct"] = l.element_pct;
    e["group_pct"] = l.group_pct;
    e["zeros"] = l.zeros;
    e["total"] = l.total;
    e["zero_groups"] = l.zero_groups;
    e["groups"] = l.groups;
    layers.push_back(e);
  }
  j["per_layer"] = layers;

  std::ofstream js(dir + "/sparsity.json");
  js << j.dump(2) << '\n';

  std::ofstream csv(dir + "/sparsity.csv");
  csv << "layer,kind,element_pct,group_pct,zeros,total,zero_groups,groups\n";
  for (const LayerSparsity& l : rep.per_layer)
    csv << l.name << ',' << (l.is_conv ? "conv" : "fc") << ','
        << format_number(l.element_pct) << ',' << format_number(l.group_pct)
        << ',' << l.zeros << ',' << l.total << ',' << l.zero_groups << ','
        << l.groups << '\n';
  if (!js || !csv) throw DataError("cannot write sparsity report under " + dir);
}

void write_weight_histogram(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write histogram: " + path);
  out << "layer,bin_lo,bin_hi,count\n";
  constexpr int kBins = 64;
  for (const Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    const float cap = l.weight.max_abs();
    const float lo = -cap, hi = cap;
    const float width = (hi - lo) / kBins;
    std::array<std::size_t, kBins> counts{};
    for (const float w : l.weight.data) {
      int b = width > 0.0f ? static_cast<int>((w - lo) / width) : 0;
      if (b < 0) b = 0;
      if (b >= kBins) b = kBins - 1;
      ++counts[b];
    }
    for (int b = 0; b < kBins; ++b)
      out << l.spec.name << ',' << format_number(lo + b * width) << ','
          << format_number(lo + (b + 1) * width) << ',' << counts[b] << '\n';
  }
}

void write_fault_records(const std::string& path,
                         const std::vector<FaultRecord>& records,
                         const std::vector<std::pair<std::string, double>>&
                             params) {
  ordered_json j;
  ordered_json p;
  for (const auto& [k, v] : params) p[k] = v;
  j["params"] = p;
  ordered_json list = ordered_json::array();
  for (const FaultRecord& r : records) {
    ordered_json e;
    e["pair"] = r.pair;
    e["pol"] = std::string(1, r.polarity);
    e["cell"] = r.cell;
    e["kind"] = std::string(1, r.kind);
    e["value"] = r.value;
    list.push_back(e);
  }
  j["faults"] = list;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write fault file: " + path);
  out << j.dump() << '\n';
}

std::vector<FaultRecord> read_fault_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fault file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed fault file: ") + e.what());
  }
  std::vector<FaultRecord> records;
  for (const auto& e : j.at("faults")) {
    FaultRecord r;
    r.pair = e.at("pair").get<std::size_t>();
    r.polarity = e.at("pol").get<std::string>().at(0);
    r.cell = e.at("cell").get<std::size_t>();
    r.kind = e.at("kind").get<std::string>().at(0);
    r.value = e.at("value").get<float>();
    records.push_back(r);
  }
  return records;
}

}  // namespace prunix
