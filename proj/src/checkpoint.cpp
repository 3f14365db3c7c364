#include "prunix/checkpoint.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prunix/errors.hpp"
#include "prunix/quantizer.hpp"

namespace prunix {

namespace {

std::string format_float_exact(float v) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

float parse_float_exact(const std::string& s) {
  float v = 0.0f;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("checkpoint: bad float literal '" + s + "'");
  return v;
}

struct TensorRecord {
  std::string name;
  std::string dtype;  // f32 | i32 | u8
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  float scale = 0.0f;
  bool has_scale = false;
};

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> shape;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) shape.push_back(std::stoull(cell));
  if (shape.empty()) throw DataError("checkpoint: empty shape");
  return shape;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32" || dtype == "i32") return 4;
  if (dtype == "u8") return 1;
  throw DataError("checkpoint: unknown dtype " + dtype);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m,
                     const std::map<std::string, std::string>& meta,
                     const std::vector<float>& scales, const PruneMask* mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  std::ostringstream manifest;
  std::string payload;
  manifest << "prunix-checkpoint v1\n";
  manifest << "meta arch " << (meta.count("arch") ? meta.at("arch") : "desk")
           << "\n";
  manifest << "meta classes " << m.num_classes << "\n";
  manifest << "meta input " << m.input_shape[0] << ',' << m.input_shape[1]
           << ',' << m.input_shape[2] << "\n";
  manifest << "meta l_f " << m.regularized_param_layers << "\n";
  for (const auto& [k, v] : meta) {
    if (k == "arch") continue;
    manifest << "meta " << k << ' ' << v << "\n";
  }
  for (std::size_t pi = 0; pi < scales.size(); ++pi)
    manifest << "scale " << pi << ' ' << format_float_exact(scales[pi])
             << "\n";

  const auto add_tensor = [&](const std::string& name,
                              const std::string& dtype,
                              const std::vector<std::size_t>& shape,
                              const void* data, std::size_t bytes,
                              const float* scale) {
    manifest << "tensor " << name << ' ' << dtype << ' '
             << shape_to_string(shape) << ' ' << payload.size();
    if (scale != nullptr)
      manifest << " scale " << format_float_exact(*scale);
    manifest << "\n";
    payload.append(static_cast<const char*>(data), bytes);
  };

  const bool quantized = meta.count("quant_bits") != 0;
  const int bits = quantized ? std::stoi(meta.at("quant_bits")) : 0;
  const int clamp = meta.count("quant_clamp")
                        ? std::stoi(meta.at("quant_clamp"))
                        : (quantized ? full_scale_levels(bits) : 0);

  std::size_t pi = 0;
  for (const Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    add_tensor(l.spec.name + ".weight", "f32", l.weight.shape,
               l.weight.data.data(), l.weight.numel() * 4, nullptr);
    add_tensor(l.spec.name + ".bias", "f32", l.bias.shape, l.bias.data.data(),
               l.bias.numel() * 4, nullptr);
    if (mask != nullptr && pi < mask->layers.size() &&
        !mask->layers[pi].empty())
      add_tensor(l.spec.name + ".mask", "u8", l.weight.shape,
                 mask->layers[pi].data(), mask->layers[pi].size(), nullptr);
    if (quantized && pi < scales.size() && scales[pi] > 0.0f) {
      const QuantizedTensor qw = quantize(l.weight, scales[pi], clamp);
      add_tensor(l.spec.name + ".qweight", "i32", qw.shape, qw.levels.data(),
                 qw.levels.size() * 4, &scales[pi]);
    }
    ++pi;
  }
  manifest << "end\n";

  const std::string header = manifest.str();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  std::string line;
  if (!std::getline(in, line) || line != "prunix-checkpoint v1")
    throw DataError("not a prunix checkpoint: " + path);

  Checkpoint ck;
  std::vector<TensorRecord> records;
  std::vector<std::pair<std::size_t, float>> scale_lines;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::stringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (tag == "scale") {
      std::size_t pi;
      std::string lit;
      ss >> pi >> lit;
      scale_lines.emplace_back(pi, parse_float_exact(lit));
    } else if (tag == "tensor") {
      TensorRecord r;
      std::string shape_str;
      ss >> r.name >> r.dtype >> shape_str >> r.offset;
      r.shape = parse_shape(shape_str);
      std::string extra;
      if (ss >> extra) {
        if (extra != "scale") throw DataError("checkpoint: bad tensor line");
        std::string lit;
        ss >> lit;
        r.scale = parse_float_exact(lit);
        r.has_scale = true;
      }
      records.push_back(std::move(r));
    } else {
      throw DataError("checkpoint: unknown manifest line: " + line);
    }
  }
  if (line != "end") throw DataError("checkpoint: missing end marker");

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  // Rebuild the architecture, then fill tensors by name.
  const std::string arch = ck.meta.count("arch") ? ck.meta["arch"] : "desk";
  const std::size_t classes =
      ck.meta.count("classes") ? std::stoull(ck.meta["classes"]) : 10;
  std::array<std::size_t, 3> input{1, 8, 8};
  if (ck.meta.count("input")) {
    const auto v = parse_shape(ck.meta["input"]);
    if (v.size() != 3) throw DataError("checkpoint: bad input shape");
    input = {v[0], v[1], v[2]};
  }
  ck.model = make_model(arch, classes, input);
  if (ck.meta.count("l_f"))
    ck.model.regularized_param_layers = std::stoull(ck.meta["l_f"]);

  ck.scales.assign(ck.model.param_layer_count(), 0.0f);
  for (const auto& [pi, v] : scale_lines) {
    if (pi >= ck.scales.size())
      throw DataError("checkpoint: scale index out of range");
    ck.scales[pi] = v;
  }
  ck.mask = PruneMask::for_model(ck.model);
  for (auto& lm : ck.mask.layers) std::fill(lm.begin(), lm.end(), 0);

  const auto param_idx = ck.model.param_layer_indices();
  for (const TensorRecord& r : records) {
    const std::size_t bytes = shape_numel(r.shape) * dtype_size(r.dtype);
    if (r.offset + bytes > payload.size())
      throw DataError("checkpoint: payload out of range for " + r.name);
    const char* src = payload.data() + r.offset;

    const auto dot = r.name.rfind('.');
    if (dot == std::string::npos)
      throw DataError("checkpoint: bad tensor name " + r.name);
    const std::string layer_name = r.name.substr(0, dot);
    const std::string field = r.name.substr(dot + 1);

    std::size_t pi = param_idx.size();
    for (std::size_t i = 0; i < param_idx.size(); ++i)
      if (ck.model.layers[param_idx[i]].spec.name == layer_name) pi = i;
    if (pi == param_idx.size())
      throw DataError("checkpoint: unknown layer " + layer_name);
    Layer& l = ck.model.layers[param_idx[pi]];

    if (field == "weight") {
      if (r.shape != l.weight.shape)
        throw DataError("checkpoint: weight shape mismatch for " + layer_name);
      std::memcpy(l.weight.data.data(), src, bytes);
    } else if (field == "bias") {
      if (r.shape != l.bias.shape)
        throw DataError("checkpoint: bias shape mismatch for " + layer_name);
      std::memcpy(l.bias.data.data(), src, bytes);
    } else if (field == "mask") {
      if (shape_numel(r.shape) != l.weight.numel())
        throw DataError("checkpoint: mask shape mismatch for " + layer_name);
      std::memcpy(ck.mask.layers[pi].data(), src, bytes);
      ck.has_mask = true;
    } else if (field == "qweight") {
      // integrity data; float weights are authoritative
    } else {
      throw DataError("checkpoint: unknown tensor field " + field);
    }
  }
  return ck;
}

}  // namespace prunix
