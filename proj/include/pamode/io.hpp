// On-disk artifacts: trial CSVs with JSON sidecars, dataset manifests, and
// checkpoint/report helpers. All writes are atomic (temp-then-rename), all
// floats use shortest round-trip formatting, and every reader validates the
// schema it consumes.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/planner.hpp"
#include "pamode/sysid.hpp"
#include "pamode/plant.hpp"

namespace pamode {

[[nodiscard]] inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw IoError("csv: malformed number '" + std::string(s) + "'");
  return v;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return content;
}

inline void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

[[nodiscard]] inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("json parse failed: " + path.string() + ": " + e.what());
  }
}

// Recorded channels, paper reporting units. Noisy trials additionally carry
// their pre-noise channels so a written dataset round-trips in full.
inline constexpr std::string_view kCsvHeader = "t_s,x_mm,xdot_mm_s,Pf_kPa,Pe_kPa,Fe_N";
inline constexpr std::string_view kCsvHeaderClean =
    "t_s,x_mm,xdot_mm_s,Pf_kPa,Pe_kPa,Fe_N,clean_x_mm,clean_xdot_mm_s,clean_Pf_kPa,clean_Pe_kPa";

[[nodiscard]] inline std::string dataset_to_csv(const TrajectoryDataset& d) {
  const bool with_clean = d.meta.noise;
  std::string out(with_clean ? kCsvHeaderClean : kCsvHeader);
  out += '\n';
  for (std::size_t k = 0; k < d.size(); ++k) {
    out += format_double(d.t[k]);
    for (double v : {d.x_mm[k], d.xdot_mm_s[k], d.pf_kpa[k], d.pe_kpa[k], d.fe_n[k]}) {
      out += ',';
      out += format_double(v);
    }
    if (with_clean) {
      for (double v :
           {d.clean_x_mm[k], d.clean_xdot_mm_s[k], d.clean_pf_kpa[k], d.clean_pe_kpa[k]}) {
        out += ',';
        out += format_double(v);
      }
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

[[nodiscard]] inline TrajectoryDataset dataset_from_csv(const std::string& text,
                                                        const DatasetMeta& meta) {
  TrajectoryDataset d;
  d.meta = meta;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw IoError("csv: missing header line");
  const std::string_view header(text.data(), pos);
  bool with_clean = false;
  if (header == kCsvHeaderClean)
    with_clean = true;
  else if (header != kCsvHeader)
    throw IoError("csv: unexpected header '" + std::string(header) + "'");
  const std::size_t ncols = with_clean ? 10 : 6;

  ++pos;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != ncols)
      throw IoError("csv: expected " + std::to_string(ncols) + " columns, got " +
                    std::to_string(fields.size()));
    std::array<double, 10> v{};
    for (std::size_t c = 0; c < ncols; ++c) {
      v[c] = parse_double(fields[c]);
      if (!std::isfinite(v[c])) throw IoError("csv: non-finite value in row");
    }
    d.t.push_back(v[0]);
    d.x_mm.push_back(v[1]);
    d.xdot_mm_s.push_back(v[2]);
    d.pf_kpa.push_back(v[3]);
    d.pe_kpa.push_back(v[4]);
    d.fe_n.push_back(v[5]);
    if (with_clean) {
      d.clean_x_mm.push_back(v[6]);
      d.clean_xdot_mm_s.push_back(v[7]);
      d.clean_pf_kpa.push_back(v[8]);
      d.clean_pe_kpa.push_back(v[9]);
    }
  }
  if (!with_clean) {
    d.clean_x_mm = d.x_mm;
    d.clean_xdot_mm_s = d.xdot_mm_s;
    d.clean_pf_kpa = d.pf_kpa;
    d.clean_pe_kpa = d.pe_kpa;
  }
  if (d.size() < 2) throw IoError("csv: trial needs at least two samples");
  return d;
}

// One CSV + JSON sidecar pair per trial.
inline void write_trial(const std::filesystem::path& stem, const TrajectoryDataset& d) {
  nlohmann::json side = d.meta.to_json();
  side["format_version"] = 1;
  side["sample_rate_hz"] = d.sample_rate_hz;
  side["rows"] = d.size();
  write_file_atomic(stem.string() + ".csv", dataset_to_csv(d));
  write_json_atomic(stem.string() + ".json", side);
}

[[nodiscard]] inline TrajectoryDataset read_trial(const std::filesystem::path& stem) {
  const nlohmann::json side = read_json(stem.string() + ".json");
  DatasetMeta meta;
  double rate = 1000.0;
  std::size_t rows = 0;
  try {
    if (side.at("format_version").get<int>() != 1)
      throw IoError("trial sidecar: unsupported format_version");
    rate = side.at("sample_rate_hz").get<double>();
    rows = side.at("rows").get<std::size_t>();
    meta = DatasetMeta::from_json(side);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("trial sidecar: ") + e.what());
  }
  TrajectoryDataset d = dataset_from_csv(read_file(stem.string() + ".csv"), meta);
  d.sample_rate_hz = rate;
  if (d.size() != rows) throw IoError("trial: row count disagrees with sidecar");
  for (std::size_t k = 0; k < d.size(); ++k)
    if (std::abs(d.t[k] - static_cast<double>(k) / rate) > 1e-9)
      throw IoError("trial: time stamps are not uniform at the declared rate");
  return d;
}

// Dataset-directory manifest listing every generated trial.
struct ManifestEntry {
  std::string stem;  // relative path without extension
  double pf_psi = 0.0, pe_psi = 0.0;
  std::uint64_t seed = 0;
  std::size_t i = 0, j = 0;
};

struct Manifest {
  std::vector<double> levels_psi;
  std::uint64_t base_seed = 0;
  std::uint64_t plant_hash = 0;
  std::vector<ManifestEntry> trials;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : trials)
      arr.push_back({{"stem", e.stem},
                     {"pf_psi", e.pf_psi},
                     {"pe_psi", e.pe_psi},
                     {"seed", e.seed},
                     {"i", e.i},
                     {"j", e.j}});
    return nlohmann::json{{"format_version", 1},
                          {"levels_psi", levels_psi},
                          {"base_seed", base_seed},
                          {"plant_hash", plant_hash},
                          {"trials", arr}};
  }

  static Manifest from_json(const nlohmann::json& j) {
    Manifest m;
    try {
      if (j.at("format_version").get<int>() != 1)
        throw IoError("manifest: unsupported format_version");
      m.levels_psi = j.at("levels_psi").get<std::vector<double>>();
      m.base_seed = j.at("base_seed").get<std::uint64_t>();
      m.plant_hash = j.at("plant_hash").get<std::uint64_t>();
      for (const auto& e : j.at("trials")) {
        ManifestEntry entry;
        entry.stem = e.at("stem").get<std::string>();
        entry.pf_psi = e.at("pf_psi").get<double>();
        entry.pe_psi = e.at("pe_psi").get<double>();
        entry.seed = e.at("seed").get<std::uint64_t>();
        entry.i = e.at("i").get<std::size_t>();
        entry.j = e.at("j").get<std::size_t>();
        m.trials.push_back(std::move(entry));
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("manifest: ") + e.what());
    }
    return m;
  }
};

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_json_atomic(path, m.to_json());
}

[[nodiscard]] inline Manifest read_manifest(const std::filesystem::path& path) {
  return Manifest::from_json(read_json(path));
}

// Feedforward plan lookup table, one row per planned timestep.
inline constexpr std::string_view kPlanCsvHeader =
    "t_s,xd_mm,Kd_N_mm,mf_g,me_g,Khat_N_mm,residual_N,Pf_kPa,Pe_kPa,feasible";

[[nodiscard]] inline std::string plan_to_csv(const PlanResult& plan) {
  std::string out(kPlanCsvHeader);
  out += '\n';
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const double row[9] = {plan.profile.t_s[k],  plan.profile.xd_mm[k], plan.profile.kd_n_mm[k],
                           plan.mf_g[k],         plan.me_g[k],          plan.khat_n_mm[k],
                           plan.residual_n[k],   plan.pf_kpa[k],        plan.pe_kpa[k]};
    for (const double v : row) {
      out += format_double(v);
      out += ',';
    }
    out += plan.feasible[k] ? '1' : '0';
    out += '\n';
  }
  return out;
}

inline void write_plan_csv(const std::filesystem::path& path, const PlanResult& plan) {
  write_file_atomic(path, plan_to_csv(plan));
}

// Per-event record of the perturbation identification protocol.
inline constexpr std::string_view kEventCsvHeader =
    "level,Kd_N_mm,cycle,phase,direction,onset_s,xd_mm,xdotref_mm_s,mf_g,me_g,K_N_mm,B_Ns_mm,"
    "rms_mm,poor_fit";

[[nodiscard]] inline std::string events_to_csv(const ProtocolResult& proto) {
  std::string out(kEventCsvHeader);
  out += '\n';
  for (const auto& ev : proto.events) {
    out += std::to_string(ev.level);
    out += ',';
    out += format_double(ev.kd_n_mm);
    out += ',';
    out += std::to_string(ev.cycle);
    out += ',';
    out += phase_name(ev.phase);
    out += ',';
    out += std::to_string(ev.direction);
    out += ',';
    for (const double v : {ev.onset_s, ev.xd_mm, ev.xdot_ref_mm_s, ev.mf_g, ev.me_g,
                           ev.fit.k_n_mm, ev.fit.b_ns_mm, ev.fit.rms_mm}) {
      out += format_double(v);
      out += ',';
    }
    out += ev.fit.poor_fit ? '1' : '0';
    out += '\n';
  }
  return out;
}

inline void write_events_csv(const std::filesystem::path& path, const ProtocolResult& proto) {
  write_file_atomic(path, events_to_csv(proto));
}

// Generates the full grid into a directory and returns its manifest.
[[nodiscard]] inline Manifest generate_grid_directory(const SyntheticPlant& plant,
                                                      const std::vector<double>& levels,
                                                      std::uint64_t base_seed,
                                                      const std::filesystem::path& dir,
                                                      bool noise = true) {
  Manifest m;
  m.levels_psi = levels;
  m.base_seed = base_seed;
  m.plant_hash = plant.hash();
  for (const GridPoint& g : generate_grid_specs(levels, base_seed)) {
    const TrajectoryDataset d =
        generate_dataset(plant, g.pf_psi, g.pe_psi, g.excitation, g.seed, noise);
    char stem[64];
    std::snprintf(stem, sizeof(stem), "trial_i%02zu_j%02zu", g.i, g.j);
    write_trial(dir / stem, d);
    m.trials.push_back({stem, g.pf_psi, g.pe_psi, g.seed, g.i, g.j});
  }
  write_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace pamode
