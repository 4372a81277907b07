#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "regrasp/contact.hpp"
#include "regrasp/refine.hpp"
#include "regrasp/retarget.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

// All pipeline artifacts are line-delimited text: '#'-prefixed header lines
// (format name, version, producing config digest), then one record per line.
// Doubles are printed with %.17g so rereading is bit-exact and reruns with
// the same seed produce byte-identical files.

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("digest: cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return digest_hex(h);
}

namespace detail {

class LineReader {
 public:
  LineReader(const std::filesystem::path& path, const char* what)
      : in_(path), path_(path.string()), what_(what) {
    if (!in_)
      throw std::runtime_error(std::string(what) + ": cannot open " + path_);
  }

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++lineno_;
      if (line.empty()) continue;
      if (line[0] == '#') {
        headers_.push_back(line);
        continue;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(std::string(what_) + ": " + msg + " at " +
                             path_ + ":" + std::to_string(lineno_));
  }

  int line_number() const { return lineno_; }
  const std::vector<std::string>& headers() const { return headers_; }

  std::string header_value(const std::string& key) const {
    const std::string prefix = "# " + key + " ";
    for (const auto& h : headers_)
      if (h.rfind(prefix, 0) == 0) return h.substr(prefix.size());
    return {};
  }

 private:
  std::ifstream in_;
  std::string path_;
  const char* what_;
  int lineno_ = 0;
  std::vector<std::string> headers_;
};

inline double parse_double(LineReader& r, const std::string& tok) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) r.fail("malformed number '" + tok + "'");
    return v;
  } catch (const std::invalid_argument&) {
    r.fail("malformed number '" + tok + "'");
  } catch (const std::out_of_range&) {
    r.fail("number out of range '" + tok + "'");
  }
}

}  // namespace detail

// --- human keypoint trajectory ---------------------------------------------

inline std::vector<HumanFrame> read_human_trajectory(
    const std::filesystem::path& path, int expected_keypoints = kStandardKeypoints) {
  detail::LineReader r(path, "human-trajectory");
  std::vector<HumanFrame> frames;
  std::string line;
  while (r.next(line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (static_cast<int>(toks.size()) != 1 + 3 * expected_keypoints)
      r.fail("expected " + std::to_string(1 + 3 * expected_keypoints) +
             " fields, got " + std::to_string(toks.size()));
    HumanFrame f;
    f.timestamp = detail::parse_double(r, toks[0]);
    for (int i = 0; i < expected_keypoints; ++i)
      f.keypoints.emplace_back(detail::parse_double(r, toks[1 + 3 * i]),
                               detail::parse_double(r, toks[2 + 3 * i]),
                               detail::parse_double(r, toks[3 + 3 * i]));
    if (!frames.empty() && f.timestamp <= frames.back().timestamp)
      r.fail("timestamps must be strictly increasing");
    frames.push_back(std::move(f));
  }
  if (frames.empty())
    throw std::runtime_error("human-trajectory: no frames in " +
                             path.string());
  return frames;
}

inline void write_human_trajectory(const std::filesystem::path& path,
                                   const std::vector<HumanFrame>& frames) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("human-trajectory: cannot write " +
                             path.string());
  out << "# regrasp human-trajectory v1\n";
  if (!frames.empty())
    out << "# keypoints " << frames.front().keypoints.size() << "\n";
  for (const auto& f : frames) {
    out << fmt_double(f.timestamp);
    for (const auto& kp : f.keypoints)
      out << " " << fmt_double(kp.x()) << " " << fmt_double(kp.y()) << " "
          << fmt_double(kp.z());
    out << "\n";
  }
}

// --- joint trajectory -------------------------------------------------------

struct GraspSequence {
  enum class Provenance { Retargeted, Refined };
  Provenance provenance = Provenance::Retargeted;
  std::string config_digest;
  std::vector<double> timestamps;
  std::vector<JointVector> poses;
  std::vector<double> objectives;  // per frame; empty if absent
};

struct EnergyMetadataLine {
  int frame = -1;
  Finger finger = Finger::Palm;
  EnergyBreakdown after;
  double total_before = 0.0;
  double total_after = 0.0;
};

inline void write_sequence(const std::filesystem::path& path,
                           const GraspSequence& seq,
                           const std::vector<EnergyMetadataLine>& energies = {}) {
  if (seq.poses.empty())
    throw std::invalid_argument("sequence: nothing to write");
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("sequence: cannot write " + path.string());
  const int dof = static_cast<int>(seq.poses.front().size());
  out << "# regrasp joint-trajectory v1\n";
  out << "# provenance "
      << (seq.provenance == GraspSequence::Provenance::Refined ? "refined"
                                                               : "retargeted")
      << "\n";
  out << "# config " << seq.config_digest << "\n";
  out << "# dof " << dof << "\n";
  out << "# columns t q[" << dof << "] objective\n";
  for (std::size_t t = 0; t < seq.poses.size(); ++t) {
    out << fmt_double(seq.timestamps[t]);
    for (int i = 0; i < dof; ++i) out << " " << fmt_double(seq.poses[t][i]);
    out << " "
        << fmt_double(t < seq.objectives.size() ? seq.objectives[t] : 0.0);
    out << "\n";
  }
  for (const auto& e : energies) {
    out << "# energy frame=" << e.frame << " finger=" << to_string(e.finger)
        << " dis=" << fmt_double(e.after.dis)
        << " pen=" << fmt_double(e.after.pen)
        << " align=" << fmt_double(e.after.align)
        << " spen=" << fmt_double(e.after.spen)
        << " joints=" << fmt_double(e.after.joints)
        << " total_before=" << fmt_double(e.total_before)
        << " total_after=" << fmt_double(e.total_after) << "\n";
  }
}

inline GraspSequence read_sequence(const std::filesystem::path& path,
                                   std::vector<EnergyMetadataLine>* energies =
                                       nullptr) {
  detail::LineReader r(path, "sequence");
  GraspSequence seq;
  std::string line;
  int dof = -1;
  while (r.next(line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (dof < 0) {
      if (toks.size() < 3) r.fail("record too short");
      dof = static_cast<int>(toks.size()) - 2;
    }
    if (static_cast<int>(toks.size()) != dof + 2)
      r.fail("expected " + std::to_string(dof + 2) + " fields, got " +
             std::to_string(toks.size()));
    seq.timestamps.push_back(detail::parse_double(r, toks[0]));
    JointVector q(dof);
    for (int i = 0; i < dof; ++i) q[i] = detail::parse_double(r, toks[1 + i]);
    seq.poses.push_back(std::move(q));
    seq.objectives.push_back(detail::parse_double(r, toks.back()));
  }
  if (seq.poses.empty())
    throw std::runtime_error("sequence: no frames in " + path.string());
  seq.config_digest = r.header_value("config");
  seq.provenance = r.header_value("provenance") == "refined"
                       ? GraspSequence::Provenance::Refined
                       : GraspSequence::Provenance::Retargeted;
  if (energies) {
    energies->clear();
    for (const auto& h : r.headers()) {
      if (h.rfind("# energy ", 0) != 0) continue;
      EnergyMetadataLine e;
      std::istringstream hs(h.substr(9));
      std::string kv;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "frame") e.frame = std::stoi(val);
        else if (key == "finger") e.finger = finger_from_string(val).value_or(Finger::Palm);
        else if (key == "dis") e.after.dis = std::stod(val);
        else if (key == "pen") e.after.pen = std::stod(val);
        else if (key == "align") e.after.align = std::stod(val);
        else if (key == "spen") e.after.spen = std::stod(val);
        else if (key == "joints") e.after.joints = std::stod(val);
        else if (key == "total_before") e.total_before = std::stod(val);
        else if (key == "total_after") e.total_after = std::stod(val);
      }
      energies->push_back(e);
    }
  }
  return seq;
}

// --- contact timeline -------------------------------------------------------

inline void write_contact_timeline(const std::filesystem::path& path,
                                   const ContactTimeline& timeline,
                                   const std::vector<double>& timestamps,
                                   const std::string& config_digest) {
  if (timeline.states.size() != timestamps.size() ||
      timeline.maps.size() != timestamps.size())
    throw std::invalid_argument("contact-timeline: length mismatch");
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("contact-timeline: cannot write " +
                             path.string());
  out << "# regrasp contact-timeline v1\n";
  out << "# config " << config_digest << "\n";
  out << "# fingers thumb index middle ring pinky\n";
  out << "# columns frame t c[5] npairs (finger:hand:vertex:distance)*\n";
  for (std::size_t t = 0; t < timestamps.size(); ++t) {
    out << t << " " << fmt_double(timestamps[t]);
    for (int f = 0; f < kNumFingers; ++f)
      out << " " << (timeline.states[t][f] ? 1 : 0);
    std::size_t npairs = 0;
    for (const auto& pairs : timeline.maps[t].fingers) npairs += pairs.size();
    out << " " << npairs;
    for (int f = 0; f < kNumFingers; ++f)
      for (const auto& p : timeline.maps[t].fingers[f])
        out << " " << to_string(static_cast<Finger>(f)) << ":" << p.hand_point
            << ":" << p.vertex << ":" << fmt_double(p.distance);
    out << "\n";
  }
}

inline ContactTimeline read_contact_timeline(
    const std::filesystem::path& path,
    std::vector<double>* timestamps = nullptr,
    std::string* config_digest = nullptr) {
  detail::LineReader r(path, "contact-timeline");
  ContactTimeline timeline;
  if (timestamps) timestamps->clear();
  std::string line;
  while (r.next(line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (toks.size() < 8) r.fail("record too short");
    const std::size_t frame = std::stoul(toks[0]);
    if (frame != timeline.states.size())
      r.fail("frames must be consecutive from 0");
    if (timestamps) timestamps->push_back(detail::parse_double(r, toks[1]));
    ContactState st{};
    for (int f = 0; f < kNumFingers; ++f) {
      if (toks[2 + f] != "0" && toks[2 + f] != "1")
        r.fail("contact flags must be 0 or 1");
      st[f] = toks[2 + f] == "1";
    }
    const std::size_t npairs = std::stoul(toks[7]);
    if (toks.size() != 8 + npairs)
      r.fail("expected " + std::to_string(npairs) + " pairs, got " +
             std::to_string(toks.size() - 8));
    ContactMap map;
    for (std::size_t i = 8; i < toks.size(); ++i) {
      const std::string& pt = toks[i];
      const auto c1 = pt.find(':');
      const auto c2 = pt.find(':', c1 + 1);
      const auto c3 = pt.find(':', c2 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos ||
          c3 == std::string::npos)
        r.fail("malformed correspondence '" + pt + "'");
      const auto finger = finger_from_string(pt.substr(0, c1));
      if (!finger || *finger == Finger::Palm)
        r.fail("unknown finger in correspondence '" + pt + "'");
      ContactPair pair;
      try {
        pair.hand_point = std::stoi(pt.substr(c1 + 1, c2 - c1 - 1));
        pair.vertex = std::stoi(pt.substr(c2 + 1, c3 - c2 - 1));
        pair.distance = std::stod(pt.substr(c3 + 1));
      } catch (const std::exception&) {
        r.fail("malformed correspondence '" + pt + "'");
      }
      map.fingers[static_cast<int>(*finger)].push_back(pair);
    }
    timeline.states.push_back(st);
    timeline.maps.push_back(std::move(map));
  }
  if (timeline.states.empty())
    throw std::runtime_error("contact-timeline: no frames in " +
                             path.string());
  if (config_digest) *config_digest = r.header_value("config");
  return timeline;
}

}  // namespace regrasp
