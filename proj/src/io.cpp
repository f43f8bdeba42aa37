/* Copyright 2026 The msmrf Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "msmrf/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "msmrf/error.hpp"

namespace msmrf {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void append_f64(std::string& out, const double* v, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(v), n * sizeof(double));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto bits = std::bit_cast<std::array<char, 8>>(v[i]);
      std::reverse(bits.begin(), bits.end());
      out.append(bits.data(), bits.size());
    }
  }
}

void read_f64(const char* in, double* v, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(v, in, n * sizeof(double));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::array<char, 8> bits;
      std::memcpy(bits.data(), in + 8 * i, 8);
      std::reverse(bits.begin(), bits.end());
      v[i] = std::bit_cast<double>(bits);
    }
  }
}

void append_cplx(std::string& out, const cplx* v, std::size_t n) {
  append_f64(out, reinterpret_cast<const double*>(v), 2 * n);
}

void expect_size(const std::string& bytes, std::size_t want, const fs::path& path) {
  if (bytes.size() != want)
    throw DataIntegrityError(path.string() + ": expected " + std::to_string(want) +
                             " bytes, found " + std::to_string(bytes.size()));
}

void expect_format(const json& j, const char* format, const fs::path& path) {
  if (!j.is_object() || j.value("format", "") != format)
    throw DataIntegrityError(path.string() + ": not a " + format + " sidecar");
  if (j.value("version", 0) != kFormatVersion)
    throw DataIntegrityError(path.string() + ": unsupported version");
}

template <class T>
T field(const json& j, const char* key, const fs::path& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataIntegrityError(path.string() + ": field '" + key + "': " + e.what());
  }
}

fs::path sidecar(const fs::path& dir, const std::string& stem) { return dir / (stem + ".json"); }

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".partial");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os.flush()) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw ConfigError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw ConfigError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataIntegrityError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw DataIntegrityError("read failed for " + path.string());
  return std::move(ss).str();
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataIntegrityError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string pgm16(const std::vector<double>& values, int rows, int cols, double lo, double hi) {
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n65535\n";
  const double span = hi - lo;
  for (double v : values) {
    double t = span > 0.0 && std::isfinite(v) ? (v - lo) / span : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    out += static_cast<char>(q >> 8);
    out += static_cast<char>(q & 0xff);
  }
  return out;
}

std::vector<std::string> save_maps(const fs::path& dir, const std::string& stem,
                                   const ParameterMaps& maps, bool previews) {
  maps.validate();
  std::string bin;
  bin.reserve(kChannels * maps.pixels() * sizeof(double));
  json channels = json::array();
  for (int c = 0; c < kChannels; ++c) {
    append_f64(bin, maps[c].data(), maps.pixels());
    channels.push_back({{"name", channel_name(c)}, {"unit", channel_unit(c)}});
  }
  const json meta = {{"format", "msmrf-maps"},  {"version", kFormatVersion},
                     {"rows", maps.rows},       {"cols", maps.cols},
                     {"dtype", "float64"},      {"byte_order", "little"},
                     {"layout", "channel, row, col"}, {"channels", channels}};
  atomic_write(dir / (stem + ".bin"), bin);
  write_json(sidecar(dir, stem), meta);
  std::vector<std::string> files = {stem + ".bin", stem + ".json"};
  if (previews) {
    for (int c = 0; c < kChannels; ++c) {
      const auto [lo, hi] = std::minmax_element(maps[c].begin(), maps[c].end());
      const std::string name = stem + "_" + std::string(channel_name(c)) + ".pgm";
      atomic_write(dir / name, pgm16(maps[c], maps.rows, maps.cols, *lo, *hi));
      files.push_back(name);
    }
  }
  return files;
}

ParameterMaps load_maps(const fs::path& dir, const std::string& stem) {
  const fs::path meta_path = sidecar(dir, stem);
  const json meta = read_json(meta_path);
  expect_format(meta, "msmrf-maps", meta_path);
  const int rows = field<int>(meta, "rows", meta_path), cols = field<int>(meta, "cols", meta_path);
  if (rows < 1 || cols < 1) throw DataIntegrityError(meta_path.string() + ": bad dimensions");
  const json& channels = meta.at("channels");
  if (!channels.is_array() || channels.size() != kChannels)
    throw DataIntegrityError(meta_path.string() + ": expected four channels");
  for (int c = 0; c < kChannels; ++c)
    if (channels[c].value("name", "") != channel_name(c))
      throw DataIntegrityError(meta_path.string() + ": unexpected channel order");

  const fs::path bin_path = dir / (stem + ".bin");
  const std::string bin = read_file(bin_path);
  ParameterMaps maps(rows, cols);
  expect_size(bin, kChannels * maps.pixels() * sizeof(double), bin_path);
  for (int c = 0; c < kChannels; ++c)
    read_f64(bin.data() + c * maps.pixels() * sizeof(double), maps[c].data(), maps.pixels());
  return maps;
}

std::vector<std::string> save_schedule(const fs::path& dir, const std::string& stem,
                                       const FlipSchedule& sched) {
  sched.validate();
  std::string csv = "alpha_deg\n";
  for (double a : sched.angles) csv += format_double(a * 180.0 / std::numbers::pi) + "\n";
  atomic_write(dir / (stem + ".csv"), csv);
  write_json(sidecar(dir, stem), {{"format", "msmrf-schedule"},
                                  {"version", kFormatVersion},
                                  {"tr_ms", sched.tr},
                                  {"length", sched.length()}});
  return {stem + ".csv", stem + ".json"};
}

FlipSchedule read_schedule_csv(const fs::path& path, double tr) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line) || line.substr(0, line.find_last_not_of("\r") + 1) != "alpha_deg")
    throw DataIntegrityError(path.string() + ": expected header 'alpha_deg'");
  FlipSchedule sched;
  sched.tr = tr;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double deg = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), deg);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size() || !std::isfinite(deg))
      throw DataIntegrityError(path.string() + ":" + std::to_string(lineno) + ": bad angle '" +
                               line + "'");
    sched.angles.push_back(deg * std::numbers::pi / 180.0);
  }
  try {
    sched.validate();
  } catch (const DomainError& e) {
    throw DataIntegrityError(path.string() + ": " + e.what());
  }
  return sched;
}

FlipSchedule load_schedule(const fs::path& dir, const std::string& stem) {
  const fs::path meta_path = sidecar(dir, stem);
  const json meta = read_json(meta_path);
  expect_format(meta, "msmrf-schedule", meta_path);
  FlipSchedule sched = read_schedule_csv(dir / (stem + ".csv"), field<double>(meta, "tr_ms", meta_path));
  if (sched.length() != field<std::size_t>(meta, "length", meta_path))
    throw DataIntegrityError(meta_path.string() + ": length does not match the CSV");
  return sched;
}

std::vector<std::string> save_acquisition(const fs::path& dir, const AcquisitionData& data) {
  data.validate();
  const std::size_t n = data.pixels();
  std::string kspace, masks;
  std::size_t sampled = 0;
  masks.reserve(data.length() * n);
  for (std::size_t l = 0; l < data.length(); ++l) {
    const auto& on = data.masks[l].on;
    masks.append(reinterpret_cast<const char*>(on.data()), n);
    for (std::size_t p = 0; p < n; ++p) {
      if (!on[p]) continue;
      append_cplx(kspace, &data.frames[l][p], 1);
      ++sampled;
    }
  }
  atomic_write(dir / "kspace.bin", kspace);
  atomic_write(dir / "masks.bin", masks);
  write_json(dir / "acquisition.json",
             {{"format", "msmrf-acquisition"}, {"version", kFormatVersion},
              {"rows", data.rows}, {"cols", data.cols}, {"length", data.length()},
              {"tr_ms", data.schedule.tr}, {"sampled_entries", sampled},
              {"kspace", "sampled entries only, frame-major, pixel order, complex float64"},
              {"masks", "uint8 per entry, frame-major, row-major"}});
  return {"kspace.bin", "masks.bin", "acquisition.json"};
}

AcquisitionData load_acquisition(const fs::path& dir, const FlipSchedule& sched) {
  const fs::path meta_path = dir / "acquisition.json";
  const json meta = read_json(meta_path);
  expect_format(meta, "msmrf-acquisition", meta_path);
  AcquisitionData data;
  data.rows = field<int>(meta, "rows", meta_path);
  data.cols = field<int>(meta, "cols", meta_path);
  const auto length = field<std::size_t>(meta, "length", meta_path);
  if (data.rows < 1 || data.cols < 1 || length < 1)
    throw DataIntegrityError(meta_path.string() + ": bad dimensions");
  if (length != sched.length() || field<double>(meta, "tr_ms", meta_path) != sched.tr)
    throw DataIntegrityError(meta_path.string() + ": does not match the flip schedule");
  data.schedule = sched;

  const std::size_t n = data.pixels();
  const std::string masks = read_file(dir / "masks.bin");
  expect_size(masks, length * n, dir / "masks.bin");
  const std::string kspace = read_file(dir / "kspace.bin");
  expect_size(kspace, field<std::size_t>(meta, "sampled_entries", meta_path) * 2 * sizeof(double),
              dir / "kspace.bin");

  data.masks.resize(length);
  data.frames.assign(length, std::vector<cplx>(n));
  std::size_t k = 0;
  for (std::size_t l = 0; l < length; ++l) {
    SamplingMask& m = data.masks[l];
    m.rows = data.rows;
    m.cols = data.cols;
    m.on.assign(masks.begin() + static_cast<std::ptrdiff_t>(l * n),
                masks.begin() + static_cast<std::ptrdiff_t>((l + 1) * n));
    for (std::size_t p = 0; p < n; ++p) {
      if (m.on[p] > 1) throw DataIntegrityError("masks.bin: entries must be 0 or 1");
      if (!m.on[p]) continue;
      if ((k + 1) * 2 * sizeof(double) > kspace.size())
        throw DataIntegrityError("kspace.bin: fewer entries than the masks select");
      double v[2];
      read_f64(kspace.data() + k * 2 * sizeof(double), v, 2);
      data.frames[l][p] = {v[0], v[1]};
      ++k;
    }
  }
  if (k * 2 * sizeof(double) != kspace.size())
    throw DataIntegrityError("kspace.bin: entry count does not match the masks");
  data.validate();
  return data;
}

std::vector<std::string> save_dictionary(const fs::path& dir, const std::string& stem,
                                         const Dictionary& dict) {
  dict.validate();
  std::string bin;
  append_cplx(bin, dict.atoms.data(), dict.atoms.size());
  atomic_write(dir / (stem + ".bin"), bin);
  write_json(sidecar(dir, stem),
             {{"format", "msmrf-dictionary"}, {"version", kFormatVersion},
              {"length", dict.length}, {"tr_ms", dict.tr}, {"atoms", dict.size()},
              {"t1_ms", dict.grid.t1}, {"t2_ms", dict.grid.t2}, {"omega_hz", dict.grid.omega},
              {"order", "t1, t2, omega (omega fastest)"}});
  return {stem + ".bin", stem + ".json"};
}

Dictionary load_dictionary(const fs::path& dir, const std::string& stem) {
  const fs::path meta_path = sidecar(dir, stem);
  const json meta = read_json(meta_path);
  expect_format(meta, "msmrf-dictionary", meta_path);
  DictionaryGrid grid{field<std::vector<double>>(meta, "t1_ms", meta_path),
                      field<std::vector<double>>(meta, "t2_ms", meta_path),
                      field<std::vector<double>>(meta, "omega_hz", meta_path)};
  const auto length = field<std::size_t>(meta, "length", meta_path);
  try {
    grid.validate();
  } catch (const DomainError& e) {
    throw DataIntegrityError(meta_path.string() + ": " + e.what());
  }
  const fs::path bin_path = dir / (stem + ".bin");
  const std::string bin = read_file(bin_path);
  expect_size(bin, grid.size() * length * 2 * sizeof(double), bin_path);
  std::vector<cplx> atoms(grid.size() * length);
  read_f64(bin.data(), reinterpret_cast<double*>(atoms.data()), 2 * atoms.size());
  return assemble_dictionary(grid, field<double>(meta, "tr_ms", meta_path), length,
                             std::move(atoms));
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& files,
                    const json& extra) {
  json hashes = json::object();
  for (const std::string& f : files) hashes[f] = sha256_hex(read_file(dir / f));
  json m = extra;
  m["format"] = "msmrf-manifest";
  m["version"] = kFormatVersion;
  m["files"] = hashes;
  write_json(dir / "manifest.json", m);
}

json verify_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  const json m = read_json(path);
  expect_format(m, "msmrf-manifest", path);
  if (!m.contains("files") || !m["files"].is_object())
    throw DataIntegrityError(path.string() + ": no file list");
  for (const auto& [name, hash] : m["files"].items()) {
    const fs::path f = dir / name;
    if (!fs::exists(f)) throw DataIntegrityError("manifest lists missing file " + f.string());
    if (sha256_hex(read_file(f)) != hash.get<std::string>())
      throw DataIntegrityError("hash mismatch for " + f.string());
  }
  return m;
}

}  // namespace msmrf
