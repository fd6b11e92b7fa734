#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dslam/core/checkpoint.hpp"
#include "dslam/sim/episode.hpp"

namespace dslam {

// JSON-lines master format, one episode per line, schema-versioned, plus an
// optional little-endian binary sidecar holding all scan ranges.
namespace dataset {

constexpr int kSchemaVersion = 1;
constexpr char kCacheMagic[4] = {'D', 'S', 'S', 'B'};
constexpr uint8_t kCacheVersion = 1;

using nlohmann::json;

inline json pose_to_json(const Pose2D& p) { return json::array({p.x, p.y, p.theta}); }

inline Pose2D pose_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline json episode_to_json(const EpisodeRecord& ep) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["floorplan_seed"] = ep.floorplan_seed;
  j["generator"] = ep.generator;
  j["sensor"] = {{"fov", ep.start_scan.fov},
                 {"r_max", ep.start_scan.r_max},
                 {"r_min", ep.start_scan.r_min}};
  j["start_pose"] = pose_to_json(ep.start_pose);
  j["goal"] = json::array({ep.goal.x, ep.goal.y});
  j["start_scan"] = ep.start_scan.ranges;
  json steps = json::array();
  for (const auto& s : ep.steps) {
    steps.push_back({{"action", action_name(s.action)},
                     {"pose", pose_to_json(s.pose)},
                     {"collided", s.collided},
                     {"scan", s.scan.ranges}});
  }
  j["steps"] = std::move(steps);
  return j;
}

inline EpisodeRecord episode_from_json(const json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion)
    throw std::runtime_error("dataset schema version " + std::to_string(version) +
                             " does not match expected " + std::to_string(kSchemaVersion));
  EpisodeRecord ep;
  ep.floorplan_seed = j.at("floorplan_seed").get<uint64_t>();
  ep.generator = j.at("generator").get<std::string>();
  ep.start_pose = pose_from_json(j.at("start_pose"));
  ep.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>(), 0.0};
  const auto& sensor = j.at("sensor");
  auto fill_scan = [&](RangeScan& s) {
    s.fov = sensor.at("fov").get<double>();
    s.r_max = sensor.at("r_max").get<double>();
    s.r_min = sensor.at("r_min").get<double>();
  };
  fill_scan(ep.start_scan);
  ep.start_scan.ranges = j.at("start_scan").get<std::vector<double>>();
  for (const auto& js : j.at("steps")) {
    StepRecord s;
    s.action = action_from_name(js.at("action").get<std::string>());
    s.pose = pose_from_json(js.at("pose"));
    s.collided = js.at("collided").get<bool>();
    fill_scan(s.scan);
    s.scan.ranges = js.at("scan").get<std::vector<double>>();
    ep.steps.push_back(std::move(s));
  }
  return ep;
}

inline std::string cache_path(const std::string& path) { return path + ".scanbin"; }

inline void write_scan_cache(const std::string& path, const std::vector<EpisodeRecord>& eps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write scan cache " + path);
  os.write(kCacheMagic, 4);
  os.put(char(kCacheVersion));
  ckpt::write_u32(os, uint32_t(eps.size()));
  for (const auto& ep : eps) {
    ckpt::write_u32(os, uint32_t(ep.steps.size() + 1));
    ckpt::write_u32(os, uint32_t(ep.start_scan.ranges.size()));
    ckpt::write_f64(os, ep.start_scan.ranges.data(), ep.start_scan.ranges.size());
    for (const auto& s : ep.steps) ckpt::write_f64(os, s.scan.ranges.data(), s.scan.ranges.size());
  }
}

inline void load_scan_cache(const std::string& path, std::vector<EpisodeRecord>& eps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open scan cache " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw std::runtime_error("bad scan cache magic in " + path);
  const int version = is.get();
  if (version != kCacheVersion)
    throw std::runtime_error("scan cache version " + std::to_string(version) +
                             " does not match expected " + std::to_string(kCacheVersion));
  const uint32_t count = ckpt::read_u32(is);
  if (count != eps.size())
    throw std::runtime_error("scan cache episode count mismatch: " + std::to_string(count) +
                             " vs " + std::to_string(eps.size()));
  for (auto& ep : eps) {
    const uint32_t n_scans = ckpt::read_u32(is);
    const uint32_t beams = ckpt::read_u32(is);
    if (n_scans != ep.steps.size() + 1)
      throw std::runtime_error("scan cache scan count mismatch in " + path);
    ep.start_scan.ranges.resize(beams);
    ckpt::read_f64(is, ep.start_scan.ranges.data(), beams);
    for (auto& s : ep.steps) {
      s.scan.ranges.resize(beams);
      ckpt::read_f64(is, s.scan.ranges.data(), beams);
    }
    if (!is) throw std::runtime_error("truncated scan cache " + path);
  }
}

}  // namespace dataset

inline void write_dataset(const std::string& path, const std::vector<EpisodeRecord>& eps,
                          bool with_cache = false) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write dataset " + path);
  for (const auto& ep : eps) os << dataset::episode_to_json(ep).dump() << "\n";
  if (!os) throw std::runtime_error("dataset write failed: " + path);
  os.close();
  if (with_cache) dataset::write_scan_cache(dataset::cache_path(path), eps);
}

inline std::vector<EpisodeRecord> read_dataset(const std::string& path, bool use_cache = false) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset " + path);
  std::vector<EpisodeRecord> eps;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      eps.push_back(dataset::episode_from_json(dataset::json::parse(line)));
    } catch (const dataset::json::exception& e) {
      throw std::runtime_error("dataset parse error at " + path + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  if (use_cache) dataset::load_scan_cache(dataset::cache_path(path), eps);
  return eps;
}

}  // namespace dslam
