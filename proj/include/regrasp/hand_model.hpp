#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "regrasp/types.hpp"

namespace regrasp {

enum class JointKind { Revolute, Prismatic, Free };

struct JointSpec {
  std::string name;
  std::string parent_link;
  Vec3 axis = Vec3::UnitZ();
  JointKind kind = JointKind::Revolute;
  double lower = 0.0;
  double upper = 0.0;
  double rest = 0.0;
};

struct SurfaceSample {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

struct LinkFrame {
  std::string name;
  std::string parent_joint;  // empty for the tree root
  Transform local = Transform::Identity();
  std::optional<Vec3> fingertip;  // local offset of the fingertip marker
  Finger finger = Finger::Palm;
  std::vector<SurfaceSample> samples;
};

struct KeypointDef {
  int link = -1;
  Vec3 offset = Vec3::Zero();
};

struct ChainLoadOptions {
  bool allow_nonstandard = false;  // permit dof/keypoint counts off spec
  int expected_dof = kStandardDof;
  int expected_keypoints = kStandardKeypoints;
  std::vector<std::string>* warnings = nullptr;
};

// World-space surface sample, tagged with its provenance on the chain.
// `global_index` enumerates samples over all links in declaration order and
// is the hand-point index used in contact maps.
struct WorldSurfacePoint {
  Vec3 point;
  Vec3 normal;
  Finger finger;
  int link = -1;
  int global_index = -1;
};

// Robot hand as a joint/link tree. Immutable after construction; forward
// kinematics and all accessors are const and safe to call concurrently.
class KinematicChain {
 public:
  static KinematicChain from_parts(std::vector<JointSpec> joints,
                                   std::vector<LinkFrame> links,
                                   std::vector<std::pair<std::string, Vec3>>
                                       keypoint_defs,
                                   const ChainLoadOptions& opts = {}) {
    KinematicChain c;
    c.joints_ = std::move(joints);
    c.links_ = std::move(links);
    c.validate_and_index(keypoint_defs, opts);
    return c;
  }

  static KinematicChain load(const std::filesystem::path& path,
                             const ChainLoadOptions& opts = {});

  int dof() const { return static_cast<int>(joints_.size()); }
  int keypoint_count() const { return static_cast<int>(keypoints_.size()); }
  int root_dof() const { return root_dof_; }
  const std::string& name() const { return name_; }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const std::vector<LinkFrame>& links() const { return links_; }
  const std::vector<KeypointDef>& keypoint_defs() const { return keypoints_; }

  JointVector rest_pose() const {
    JointVector q(dof());
    for (int i = 0; i < dof(); ++i) q[i] = joints_[i].rest;
    return q;
  }

  JointVector lower_bounds() const {
    JointVector q(dof());
    for (int i = 0; i < dof(); ++i) q[i] = joints_[i].lower;
    return q;
  }

  JointVector upper_bounds() const {
    JointVector q(dof());
    for (int i = 0; i < dof(); ++i) q[i] = joints_[i].upper;
    return q;
  }

  // Clamps articulated joints to their limits. Dummy root joints are not
  // clamped; their limits only bound the global-search box.
  JointVector clamp(const JointVector& q, bool* clamped = nullptr) const {
    check_q(q);
    JointVector out = q;
    bool any = false;
    for (int i = 0; i < dof(); ++i) {
      if (i < root_dof_ || joints_[i].kind == JointKind::Free) continue;
      const double v = std::clamp(out[i], joints_[i].lower, joints_[i].upper);
      if (v != out[i]) any = true;
      out[i] = v;
    }
    if (clamped) *clamped = any;
    return out;
  }

  // World transform per link, indexed like links(). Out-of-limit articulated
  // values are clamped first; `clamped` reports whether that happened.
  std::vector<Transform> forward_kinematics(const JointVector& q,
                                            bool* clamped = nullptr) const {
    const JointVector qc = clamp(q, clamped);
    std::vector<Transform> world(links_.size(), Transform::Identity());
    for (const int li : topo_order_) {
      const LinkFrame& link = links_[li];
      if (parent_joint_[li] < 0) {
        world[li] = link.local;
        continue;
      }
      const int ji = parent_joint_[li];
      const JointSpec& j = joints_[ji];
      world[li] = world[parent_link_[li]] * link.local *
                  joint_motion(ji, j, qc[ji]);
    }
    return world;
  }

  std::vector<Vec3> keypoints(const JointVector& q) const {
    const auto world = forward_kinematics(q);
    std::vector<Vec3> out;
    out.reserve(keypoints_.size());
    for (const auto& k : keypoints_) out.push_back(world[k.link] * k.offset);
    return out;
  }

  // World-space surface samples, optionally restricted to one finger label.
  std::vector<WorldSurfacePoint> surface_points(
      const JointVector& q, std::optional<Finger> filter = {}) const {
    const auto world = forward_kinematics(q);
    return surface_points(world, filter);
  }

  std::vector<WorldSurfacePoint> surface_points(
      const std::vector<Transform>& world,
      std::optional<Finger> filter = {}) const {
    std::vector<WorldSurfacePoint> out;
    for (std::size_t li = 0; li < links_.size(); ++li) {
      const LinkFrame& link = links_[li];
      if (filter && link.finger != *filter) continue;
      const Eigen::Matrix3d rot = world[li].rotation();
      for (std::size_t si = 0; si < link.samples.size(); ++si) {
        WorldSurfacePoint wp;
        wp.point = world[li] * link.samples[si].point;
        wp.normal = rot * link.samples[si].normal;
        wp.finger = link.finger;
        wp.link = static_cast<int>(li);
        wp.global_index = sample_base_[li] + static_cast<int>(si);
        out.push_back(wp);
      }
    }
    return out;
  }

  int surface_sample_count() const { return total_samples_; }

  // Resolve a global surface-sample index to its (link, sample) location.
  std::pair<int, int> sample_location(int global_index) const {
    if (global_index < 0 || global_index >= total_samples_)
      throw std::out_of_range("chain: sample index out of range");
    return sample_loc_[global_index];
  }

  Vec3 sample_world_point(const std::vector<Transform>& world,
                          int global_index) const {
    const auto [li, si] = sample_location(global_index);
    return world[li] * links_[li].samples[si].point;
  }

  Vec3 sample_world_normal(const std::vector<Transform>& world,
                           int global_index) const {
    const auto [li, si] = sample_location(global_index);
    return world[li].rotation() * links_[li].samples[si].normal;
  }

  Finger sample_finger(int global_index) const {
    return links_[sample_location(global_index).first].finger;
  }

  // Link carrying the fingertip marker of `f`, or -1 when the hand has no
  // such finger (contact detection then reports it as never in contact).
  int fingertip_link(Finger f) const {
    return fingertip_link_[static_cast<int>(f)];
  }

  Vec3 fingertip_position(const std::vector<Transform>& world,
                          Finger f) const {
    const int li = fingertip_link(f);
    if (li < 0)
      throw std::runtime_error(std::string("chain: no fingertip for ") +
                               to_string(f));
    return world[li] * *links_[li].fingertip;
  }

  // Indices into q of the joints whose child link carries `f`.
  const std::vector<int>& finger_dof_indices(Finger f) const {
    return finger_dofs_[static_cast<int>(f)];
  }

  // Pose of the hand root encoded by the six dummy DoF:
  // translation (q0,q1,q2) composed with intrinsic XYZ rotations (q3,q4,q5).
  static Transform root_pose(const JointVector& q) {
    Transform t = Transform::Identity();
    t.translate(Vec3(q[0], q[1], q[2]));
    t.rotate(Eigen::AngleAxisd(q[3], Vec3::UnitX()));
    t.rotate(Eigen::AngleAxisd(q[4], Vec3::UnitY()));
    t.rotate(Eigen::AngleAxisd(q[5], Vec3::UnitZ()));
    return t;
  }

  static void set_root_pose(JointVector& q, const Transform& t) {
    q.head<3>() = t.translation();
    const Eigen::Matrix3d r = t.rotation();
    // R = Rx(a) Ry(b) Rz(c), b in [-pi/2, pi/2]
    const double b = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
    double a, c;
    if (std::abs(std::cos(b)) > 1e-9) {
      a = std::atan2(-r(1, 2), r(2, 2));
      c = std::atan2(-r(0, 1), r(0, 0));
    } else {
      a = std::atan2(r(2, 1), r(1, 1));
      c = 0.0;
    }
    q[3] = a;
    q[4] = b;
    q[5] = c;
  }

  // Link reached through the dummy root block (the palm root), -1 if the
  // chain has no standard root block.
  int root_block_link() const { return root_block_link_; }

 private:
  Transform joint_motion(int index, const JointSpec& j, double value) const {
    Transform m = Transform::Identity();
    JointKind kind = j.kind;
    if (kind == JointKind::Free)
      kind = index < 3 ? JointKind::Prismatic : JointKind::Revolute;
    if (kind == JointKind::Prismatic)
      m.translate(Vec3(value * j.axis));
    else
      m.rotate(Eigen::AngleAxisd(value, j.axis));
    return m;
  }

  void check_q(const JointVector& q) const {
    if (q.size() != dof())
      throw std::invalid_argument("chain: joint vector has " +
                                  std::to_string(q.size()) + " entries, " +
                                  "expected " + std::to_string(dof()));
    if (!q.allFinite())
      throw std::invalid_argument("chain: joint vector is not finite");
  }

  void validate_and_index(
      const std::vector<std::pair<std::string, Vec3>>& keypoint_defs,
      const ChainLoadOptions& opts);

  std::string name_;
  std::vector<JointSpec> joints_;
  std::vector<LinkFrame> links_;
  std::vector<KeypointDef> keypoints_;
  std::vector<int> parent_joint_;  // per link, -1 for root
  std::vector<int> parent_link_;   // per link, -1 for root
  std::vector<int> topo_order_;
  std::vector<int> sample_base_;
  std::vector<std::pair<int, int>> sample_loc_;
  std::array<int, 6> fingertip_link_ = {-1, -1, -1, -1, -1, -1};
  std::array<std::vector<int>, 6> finger_dofs_;
  int total_samples_ = 0;
  int root_dof_ = 0;
  int root_block_link_ = -1;
};

inline void KinematicChain::validate_and_index(
    const std::vector<std::pair<std::string, Vec3>>& keypoint_defs,
    const ChainLoadOptions& opts) {
  auto warn = [&](const std::string& msg) {
    if (opts.warnings) opts.warnings->push_back(msg);
  };

  std::unordered_map<std::string, int> joint_index;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto& j = joints_[i];
    if (!joint_index.emplace(j.name, static_cast<int>(i)).second)
      throw std::runtime_error("chain: duplicate joint '" + j.name + "'");
    if (std::abs(j.axis.norm() - 1.0) > 1e-9)
      throw std::runtime_error("chain: joint '" + j.name +
                               "' axis is not unit length");
    if (!(j.lower <= j.rest && j.rest <= j.upper))
      throw std::runtime_error("chain: joint '" + j.name +
                               "' rest value outside limits");
  }

  std::unordered_map<std::string, int> link_index;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (!link_index.emplace(links_[i].name, static_cast<int>(i)).second)
      throw std::runtime_error("chain: duplicate link '" + links_[i].name +
                               "'");
    for (const auto& s : links_[i].samples) {
      if (std::abs(s.normal.norm() - 1.0) > 1e-6)
        throw std::runtime_error("chain: link '" + links_[i].name +
                                 "' sample normal is not unit length");
    }
  }

  parent_joint_.assign(links_.size(), -1);
  parent_link_.assign(links_.size(), -1);
  std::vector<int> joint_child(joints_.size(), -1);
  int root = -1;
  for (std::size_t li = 0; li < links_.size(); ++li) {
    const auto& link = links_[li];
    if (link.parent_joint.empty()) {
      if (root >= 0)
        throw std::runtime_error("chain: multiple root links ('" +
                                 links_[root].name + "', '" + link.name +
                                 "')");
      root = static_cast<int>(li);
      continue;
    }
    auto it = joint_index.find(link.parent_joint);
    if (it == joint_index.end())
      throw std::runtime_error("chain: link '" + link.name +
                               "' references unknown joint '" +
                               link.parent_joint + "'");
    if (joint_child[it->second] >= 0)
      throw std::runtime_error("chain: joint '" + link.parent_joint +
                               "' has more than one child link");
    joint_child[it->second] = static_cast<int>(li);
    parent_joint_[li] = it->second;
  }
  if (root < 0) throw std::runtime_error("chain: no root link");

  for (std::size_t ji = 0; ji < joints_.size(); ++ji) {
    if (joint_child[ji] < 0)
      throw std::runtime_error("chain: joint '" + joints_[ji].name +
                               "' has no child link");
    auto it = link_index.find(joints_[ji].parent_link);
    if (it == link_index.end())
      throw std::runtime_error("chain: joint '" + joints_[ji].name +
                               "' references unknown link '" +
                               joints_[ji].parent_link + "'");
    parent_link_[joint_child[ji]] = it->second;
  }

  // Topological order from the root; any unreached link implies a cycle or a
  // disconnected component.
  topo_order_.clear();
  std::vector<int> stack = {root};
  std::vector<char> seen(links_.size(), 0);
  std::vector<std::vector<int>> children(links_.size());
  for (std::size_t li = 0; li < links_.size(); ++li)
    if (parent_link_[li] >= 0) children[parent_link_[li]].push_back(li);
  while (!stack.empty()) {
    const int li = stack.back();
    stack.pop_back();
    if (seen[li])
      throw std::runtime_error("chain: cycle detected at link '" +
                               links_[li].name + "'");
    seen[li] = 1;
    topo_order_.push_back(li);
    for (int c : children[li]) stack.push_back(c);
  }
  if (topo_order_.size() != links_.size())
    throw std::runtime_error(
        "chain: cycle detected (not all links reachable from root)");

  if (dof() != opts.expected_dof) {
    if (!opts.allow_nonstandard)
      throw std::runtime_error("chain: " + std::to_string(dof()) +
                               " DoF, expected " +
                               std::to_string(opts.expected_dof));
    warn("chain has " + std::to_string(dof()) + " DoF (expected " +
         std::to_string(opts.expected_dof) + "), accepted by override");
  }

  keypoints_.clear();
  for (const auto& [lname, offset] : keypoint_defs) {
    auto it = link_index.find(lname);
    if (it == link_index.end())
      throw std::runtime_error("chain: keypoint references unknown link '" +
                               lname + "'");
    keypoints_.push_back(KeypointDef{it->second, offset});
  }
  if (keypoint_count() != opts.expected_keypoints) {
    if (!opts.allow_nonstandard)
      throw std::runtime_error("chain: " + std::to_string(keypoint_count()) +
                               " keypoints, expected " +
                               std::to_string(opts.expected_keypoints));
    warn("chain has " + std::to_string(keypoint_count()) +
         " keypoints (expected " + std::to_string(opts.expected_keypoints) +
         "), accepted by override");
  }

  // Detect the standard dummy root block: the first six joints chain from
  // the root link as translations x,y,z then rotations x,y,z.
  root_dof_ = 0;
  root_block_link_ = -1;
  if (dof() >= kRootDof) {
    bool ok = true;
    int expect_parent = root;
    static const Vec3 axes[6] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(),
                                 Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    for (int i = 0; i < kRootDof && ok; ++i) {
      const JointSpec& j = joints_[i];
      const bool kind_ok =
          j.kind == JointKind::Free ||
          (i < 3 ? j.kind == JointKind::Prismatic
                 : j.kind == JointKind::Revolute);
      ok = kind_ok && (j.axis - axes[i]).norm() < 1e-9 &&
           parent_link_[joint_child[i]] == expect_parent &&
           links_[joint_child[i]].local.matrix().isApprox(
               Transform::Identity().matrix(), 1e-12);
      expect_parent = joint_child[i];
    }
    if (ok) {
      root_dof_ = kRootDof;
      root_block_link_ = joint_child[kRootDof - 1];
    }
  }
  if (root_dof_ == 0 && dof() == kStandardDof)
    warn("chain has no standard 6-DoF dummy root block");

  // Finger bookkeeping.
  for (auto& v : finger_dofs_) v.clear();
  fingertip_link_.fill(-1);
  for (std::size_t li = 0; li < links_.size(); ++li) {
    const auto& link = links_[li];
    if (link.fingertip) {
      const int fi = static_cast<int>(link.finger);
      if (link.finger == Finger::Palm)
        throw std::runtime_error("chain: fingertip marker on palm link '" +
                                 link.name + "'");
      if (fingertip_link_[fi] >= 0)
        throw std::runtime_error(
            std::string("chain: multiple fingertip markers for ") +
            to_string(link.finger));
      fingertip_link_[fi] = static_cast<int>(li);
    }
  }
  for (std::size_t ji = 0; ji < joints_.size(); ++ji) {
    if (static_cast<int>(ji) < root_dof_) continue;
    const Finger f = links_[joint_child[ji]].finger;
    finger_dofs_[static_cast<int>(f)].push_back(static_cast<int>(ji));
  }

  sample_base_.assign(links_.size(), 0);
  sample_loc_.clear();
  total_samples_ = 0;
  for (std::size_t li = 0; li < links_.size(); ++li) {
    sample_base_[li] = total_samples_;
    for (std::size_t si = 0; si < links_[li].samples.size(); ++si)
      sample_loc_.emplace_back(static_cast<int>(li), static_cast<int>(si));
    total_samples_ += static_cast<int>(links_[li].samples.size());
  }
}

namespace detail {

using nlohmann::json;

inline void check_fields(const json& obj, const char* what,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::runtime_error(std::string("chain: unknown field '") + key +
                               "' in " + what);
  }
}

inline Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error(std::string("chain: ") + what +
                             " must be a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace detail

inline KinematicChain KinematicChain::load(const std::filesystem::path& path,
                                           const ChainLoadOptions& opts) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("chain: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("chain: parse failure in " + path.string() +
                             ": " + e.what());
  }
  detail::check_fields(doc, "chain file",
                       {"name", "joints", "links", "keypoints"});
  if (!doc.contains("joints") || !doc.contains("links") ||
      !doc.contains("keypoints"))
    throw std::runtime_error(
        "chain: file must define joints, links and keypoints");

  std::vector<JointSpec> joints;
  for (const auto& jj : doc["joints"]) {
    detail::check_fields(
        jj, "joint", {"name", "parent_link", "axis", "kind", "limits", "rest"});
    JointSpec j;
    j.name = jj.at("name").get<std::string>();
    j.parent_link = jj.at("parent_link").get<std::string>();
    j.axis = detail::parse_vec3(jj.at("axis"), "joint axis");
    const std::string kind = jj.at("kind").get<std::string>();
    if (kind == "revolute")
      j.kind = JointKind::Revolute;
    else if (kind == "prismatic")
      j.kind = JointKind::Prismatic;
    else if (kind == "free")
      j.kind = JointKind::Free;
    else
      throw std::runtime_error("chain: joint '" + j.name +
                               "' has unknown kind '" + kind + "'");
    const auto& lim = jj.at("limits");
    if (!lim.is_array() || lim.size() != 2)
      throw std::runtime_error("chain: joint '" + j.name +
                               "' limits must be [lo, hi]");
    j.lower = lim[0].get<double>();
    j.upper = lim[1].get<double>();
    if (j.lower > j.upper)
      throw std::runtime_error("chain: joint '" + j.name +
                               "' has lo > hi limits");
    j.rest = jj.value("rest", 0.0);
    joints.push_back(std::move(j));
  }

  std::vector<LinkFrame> links;
  for (const auto& lj : doc["links"]) {
    detail::check_fields(lj, "link",
                         {"name", "parent_joint", "translation", "rotation",
                          "finger", "fingertip", "samples"});
    LinkFrame l;
    l.name = lj.at("name").get<std::string>();
    l.parent_joint = lj.value("parent_joint", std::string());
    Transform t = Transform::Identity();
    if (lj.contains("translation"))
      t.translate(detail::parse_vec3(lj["translation"], "link translation"));
    if (lj.contains("rotation")) {
      const auto& r = lj["rotation"];
      if (!r.is_array() || r.size() != 4)
        throw std::runtime_error("chain: link '" + l.name +
                                 "' rotation must be [w, x, y, z]");
      Eigen::Quaterniond q(r[0].get<double>(), r[1].get<double>(),
                           r[2].get<double>(), r[3].get<double>());
      if (std::abs(q.norm() - 1.0) > 1e-6)
        throw std::runtime_error("chain: link '" + l.name +
                                 "' rotation quaternion is not unit");
      t.rotate(q.normalized());
    }
    l.local = t;
    if (lj.contains("finger")) {
      const auto f = finger_from_string(lj["finger"].get<std::string>());
      if (!f)
        throw std::runtime_error("chain: link '" + l.name +
                                 "' has unknown finger label");
      l.finger = *f;
    }
    if (lj.contains("fingertip"))
      l.fingertip = detail::parse_vec3(lj["fingertip"], "fingertip marker");
    if (lj.contains("samples")) {
      for (const auto& sj : lj["samples"]) {
        detail::check_fields(sj, "sample", {"point", "normal"});
        SurfaceSample s;
        s.point = detail::parse_vec3(sj.at("point"), "sample point");
        s.normal = detail::parse_vec3(sj.at("normal"), "sample normal");
        l.samples.push_back(s);
      }
    }
    links.push_back(std::move(l));
  }

  std::vector<std::pair<std::string, Vec3>> keypoints;
  for (const auto& kj : doc["keypoints"]) {
    detail::check_fields(kj, "keypoint", {"link", "offset"});
    keypoints.emplace_back(kj.at("link").get<std::string>(),
                           detail::parse_vec3(kj.at("offset"), "keypoint"));
  }

  KinematicChain c;
  c.name_ = doc.value("name", path.stem().string());
  c.joints_ = std::move(joints);
  c.links_ = std::move(links);
  c.validate_and_index(keypoints, opts);
  return c;
}

inline KinematicChain load_chain(const std::filesystem::path& path,
                                 const ChainLoadOptions& opts = {}) {
  return KinematicChain::load(path, opts);
}

}  // namespace regrasp
