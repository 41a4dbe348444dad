#include <certignc/io.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace certignc {

G2oParseError::G2oParseError(int line, int column, const std::string &message)
    : std::runtime_error("line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + message),
      line_(line), column_(column), message_(message) {}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

constexpr const char *kIsotropizedMarker = "# certignc: precisions_isotropized";

struct Token {
  std::string_view text;
  int column; // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i >= line.size())
      break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

struct Arity {
  int dim;
  int count; // tokens after the tag
};

const std::map<std::string, Arity, std::less<>> &tag_table() {
  static const std::map<std::string, Arity, std::less<>> table = {
      {"VERTEX_SE2", {2, 4}},      {"EDGE_SE2", {2, 11}},
      {"VERTEX_XY", {2, 3}},       {"EDGE_SE2_XY", {2, 7}},
      {"VERTEX_SE3:QUAT", {3, 8}}, {"EDGE_SE3:QUAT", {3, 30}},
  };
  return table;
}

class LineParser {
public:
  LineParser(int line, std::vector<Token> tokens)
      : line_(line), tokens_(std::move(tokens)) {}

  [[noreturn]] void fail(std::size_t token, const std::string &msg) const {
    const int col = token < tokens_.size() ? tokens_[token].column : 1;
    throw G2oParseError(line_, col, msg);
  }

  double number(std::size_t k) const {
    const auto t = tokens_[k].text;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
      fail(k, "expected a finite number, got '" + std::string(t) + "'");
    return v;
  }

  int id(std::size_t k) const {
    const auto t = tokens_[k].text;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
      fail(k, "expected an integer id, got '" + std::string(t) + "'");
    return v;
  }

  /// Symmetric matrix from `size (size + 1) / 2` upper-triangular entries.
  Matrix information(std::size_t first, int size) const {
    Matrix I(size, size);
    std::size_t k = first;
    for (int r = 0; r < size; ++r)
      for (int c = r; c < size; ++c) {
        I(r, c) = I(c, r) = number(k++);
      }
    Eigen::LDLT<Matrix> ldlt(I);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
      fail(first, "information matrix is not positive definite");
    return I;
  }

  Matrix quaternion(std::size_t first) const {
    const double qx = number(first), qy = number(first + 1),
                 qz = number(first + 2), qw = number(first + 3);
    const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
    if (std::abs(norm - 1.0) > 1e-3)
      fail(first, "quaternion norm " + format_double(norm) +
                      " outside [1 - 1e-3, 1 + 1e-3]");
    return quaternion_to_rotation(qx, qy, qz, qw);
  }

  const std::vector<Token> &tokens() const { return tokens_; }
  int line() const { return line_; }

private:
  int line_;
  std::vector<Token> tokens_;
};

struct PendingRef {
  int line;
  int column;
  int id;
  bool landmark;
};

std::vector<std::string> split_lines(const std::string &text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (;;) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

} // namespace

std::pair<double, double> extract_precisions(const Matrix &information, int d) {
  const int size = d == 2 ? 3 : 6;
  if (d != 2 && d != 3)
    throw std::invalid_argument("extract_precisions: d must be 2 or 3");
  if (information.rows() != size || information.cols() != size)
    throw std::invalid_argument("extract_precisions: wrong information size");
  Eigen::LDLT<Matrix> ldlt(information);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw std::invalid_argument("extract_precisions: not positive definite");
  if (d == 2) {
    const double tau = 0.5 * (information(0, 0) + information(1, 1));
    return {information(2, 2), tau};
  }
  const double tau =
      (information(0, 0) + information(1, 1) + information(2, 2)) / 3.0;
  const double kappa =
      (information(3, 3) + information(4, 4) + information(5, 5)) / 3.0;
  return {kappa, tau};
}

G2oDocument parse_g2o_document(const std::string &text,
                               const std::string &source) {
  G2oDocument doc;
  doc.lines = split_lines(text);
  Problem &problem = doc.problem;
  problem.source = source;
  int dim = 0;
  std::vector<PendingRef> refs;

  for (std::size_t li = 0; li < doc.lines.size(); ++li) {
    std::string_view raw = doc.lines[li];
    if (!raw.empty() && raw.back() == '\r')
      raw.remove_suffix(1);
    const int line_no = static_cast<int>(li) + 1;
    auto tokens = tokenize(raw);
    if (tokens.empty())
      continue;
    if (tokens[0].text.front() == '#') {
      if (raw == kIsotropizedMarker)
        problem.precisions_isotropized = true;
      continue;
    }
    LineParser lp(line_no, std::move(tokens));
    const auto &tok = lp.tokens();
    const auto it = tag_table().find(tok[0].text);
    if (it == tag_table().end())
      lp.fail(0, "unknown tag '" + std::string(tok[0].text) + "'");
    const std::string tag(tok[0].text);
    const Arity arity = it->second;
    if (static_cast<int>(tok.size()) - 1 != arity.count)
      lp.fail(std::min(tok.size() - 1, static_cast<std::size_t>(arity.count) + 1),
              tag + " expects " + std::to_string(arity.count) +
                  " fields, got " + std::to_string(tok.size() - 1));
    if (dim == 0)
      dim = arity.dim;
    else if (dim != arity.dim)
      lp.fail(0, "mixed SE2/SE3 records in one document");

    if (tag == "VERTEX_SE2" || tag == "VERTEX_SE3:QUAT") {
      const int id = lp.id(1);
      if (problem.poses.count(id))
        lp.fail(1, "duplicate pose id " + std::to_string(id));
      Pose pose;
      if (dim == 2) {
        pose.t = Eigen::Vector2d(lp.number(2), lp.number(3));
        pose.R = rotation_2d(lp.number(4));
      } else {
        pose.t = Eigen::Vector3d(lp.number(2), lp.number(3), lp.number(4));
        pose.R = lp.quaternion(5);
      }
      problem.poses[id] = std::move(pose);
    } else if (tag == "VERTEX_XY") {
      const int id = lp.id(1);
      if (problem.landmarks.count(id))
        lp.fail(1, "duplicate landmark id " + std::to_string(id));
      problem.landmarks[id] = Eigen::Vector2d(lp.number(2), lp.number(3));
    } else if (tag == "EDGE_SE2" || tag == "EDGE_SE3:QUAT") {
      RelativePoseMeasurement m;
      m.i = lp.id(1);
      m.j = lp.id(2);
      if (m.i == m.j)
        lp.fail(2, "self-loop edge");
      Matrix info;
      if (dim == 2) {
        m.t = Eigen::Vector2d(lp.number(3), lp.number(4));
        m.R = rotation_2d(lp.number(5));
        info = lp.information(6, 3);
      } else {
        m.t = Eigen::Vector3d(lp.number(3), lp.number(4), lp.number(5));
        m.R = lp.quaternion(6);
        info = lp.information(10, 6);
      }
      std::tie(m.kappa, m.tau) = extract_precisions(info, dim);
      const Matrix iso = dim == 2 ? Matrix(Eigen::Vector3d(m.tau, m.tau, m.kappa).asDiagonal())
                                  : Matrix((Vector(6) << m.tau, m.tau, m.tau, m.kappa,
                                            m.kappa, m.kappa).finished().asDiagonal());
      if (info != iso)
        problem.precisions_isotropized = true;
      refs.push_back({line_no, tok[1].column, m.i, false});
      refs.push_back({line_no, tok[2].column, m.j, false});
      const EdgeClass cls = m.j == m.i + 1 ? EdgeClass::Odometry : EdgeClass::LoopClosure;
      problem.edges.push_back({std::move(m), cls});
      doc.edge_lines.push_back(li);
    } else { // EDGE_SE2_XY
      PoseLandmarkMeasurement m;
      m.pose = lp.id(1);
      m.landmark = lp.id(2);
      m.l = Eigen::Vector2d(lp.number(3), lp.number(4));
      const Matrix info = lp.information(5, 2);
      m.tau = 0.5 * (info(0, 0) + info(1, 1));
      if (info(0, 1) != 0.0 || info(0, 0) != info(1, 1))
        problem.precisions_isotropized = true;
      refs.push_back({line_no, tok[1].column, m.pose, false});
      refs.push_back({line_no, tok[2].column, m.landmark, true});
      problem.edges.push_back({std::move(m), EdgeClass::PoseLandmark});
      doc.edge_lines.push_back(li);
    }
  }

  if (dim == 0)
    throw G2oParseError(static_cast<int>(doc.lines.size()), 1,
                        "document contains no records");
  problem.d = dim;
  for (const auto &r : refs) {
    const bool found = r.landmark ? problem.landmarks.count(r.id) > 0
                                  : problem.poses.count(r.id) > 0;
    if (!found)
      throw G2oParseError(r.line, r.column,
                          std::string("edge references unknown ") +
                              (r.landmark ? "landmark " : "pose ") +
                              std::to_string(r.id));
  }
  problem.validate();
  problem.scene_scale = compute_scene_scale(problem);
  return doc;
}

Problem parse_g2o(const std::string &text, const std::string &source) {
  return parse_g2o_document(text, source).problem;
}

namespace {

void append(std::ostringstream &os, double v) { os << ' ' << format_double(v); }

/// Angle whose rotation_2d reproduces R bit for bit when one exists within a
/// few ulps of atan2, so serialize -> parse is exact.
double exact_angle(const Matrix &R) {
  const double base = angle_2d(R);
  double lo = base, hi = base;
  for (int k = 0; k <= 16; ++k) {
    if (rotation_2d(lo) == R)
      return lo;
    if (rotation_2d(hi) == R)
      return hi;
    lo = std::nextafter(lo, -INFINITY);
    hi = std::nextafter(hi, INFINITY);
  }
  return base;
}

/// Same for unit quaternions, searching shells of up to 4 ulps per component.
Eigen::Vector4d exact_quaternion(const Matrix &R) {
  constexpr int kRadius = 4;
  const Eigen::Vector4d base = rotation_to_quaternion(R);
  std::array<std::array<double, 2 * kRadius + 1>, 4> grid{};
  for (int c = 0; c < 4; ++c) {
    grid[c][kRadius] = base(c);
    for (int k = 1; k <= kRadius; ++k) {
      grid[c][kRadius - k] = std::nextafter(grid[c][kRadius - k + 1], -INFINITY);
      grid[c][kRadius + k] = std::nextafter(grid[c][kRadius + k - 1], INFINITY);
    }
  }
  for (int r = 0; r <= kRadius; ++r)
    for (int a = -r; a <= r; ++a)
      for (int b = -r; b <= r; ++b)
        for (int c = -r; c <= r; ++c)
          for (int e = -r; e <= r; ++e) {
            if (std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(e)}) != r)
              continue;
            const double qx = grid[0][kRadius + a], qy = grid[1][kRadius + b],
                         qz = grid[2][kRadius + c], qw = grid[3][kRadius + e];
            if (quaternion_to_rotation(qx, qy, qz, qw) == R)
              return {qx, qy, qz, qw};
          }
  return base;
}

void write_relative_measurement(std::ostringstream &os, int d,
                                const RelativePoseMeasurement &m) {
  append(os, m.t(0));
  append(os, m.t(1));
  if (d == 2) {
    append(os, exact_angle(m.R));
  } else {
    append(os, m.t(2));
    const Eigen::Vector4d q = exact_quaternion(m.R);
    for (int k = 0; k < 4; ++k)
      append(os, q(k));
  }
}

std::string measurement_tokens(int d, const MeasurementEdge &e) {
  std::ostringstream os;
  if (e.is_relative_pose()) {
    write_relative_measurement(os, d, e.relative_pose());
  } else {
    const auto &m = e.pose_landmark();
    for (int k = 0; k < d; ++k)
      append(os, m.l(k));
  }
  return os.str().substr(1);
}

} // namespace

std::string serialize_g2o(const Problem &problem,
                          const std::optional<Estimate> &vertices) {
  const int d = problem.d;
  std::ostringstream os;
  if (problem.precisions_isotropized)
    os << kIsotropizedMarker << '\n';

  const auto &poses = vertices ? vertices->poses : problem.poses;
  const auto &landmarks = vertices ? vertices->landmarks : problem.landmarks;
  for (const auto &[id, p] : poses) {
    if (d == 2) {
      os << "VERTEX_SE2 " << id;
      append(os, p.t(0));
      append(os, p.t(1));
      append(os, exact_angle(p.R));
    } else {
      os << "VERTEX_SE3:QUAT " << id;
      for (int k = 0; k < 3; ++k)
        append(os, p.t(k));
      const Eigen::Vector4d q = exact_quaternion(p.R);
      for (int k = 0; k < 4; ++k)
        append(os, q(k));
    }
    os << '\n';
  }
  for (const auto &[id, l] : landmarks) {
    if (d != 2)
      throw std::invalid_argument("serialize_g2o: landmarks are only supported in 2D");
    os << "VERTEX_XY " << id;
    append(os, l(0));
    append(os, l(1));
    os << '\n';
  }
  for (const auto &e : problem.edges) {
    if (e.is_relative_pose()) {
      const auto &m = e.relative_pose();
      os << (d == 2 ? "EDGE_SE2 " : "EDGE_SE3:QUAT ") << m.i << ' ' << m.j;
      write_relative_measurement(os, d, m);
      if (d == 2) {
        const double info[6] = {m.tau, 0, 0, m.tau, 0, m.kappa};
        for (double v : info)
          append(os, v);
      } else {
        const double diag[6] = {m.tau, m.tau, m.tau, m.kappa, m.kappa, m.kappa};
        for (int r = 0; r < 6; ++r)
          for (int c = r; c < 6; ++c)
            append(os, r == c ? diag[r] : 0.0);
      }
    } else {
      const auto &m = e.pose_landmark();
      if (d != 2)
        throw std::invalid_argument("serialize_g2o: landmarks are only supported in 2D");
      os << "EDGE_SE2_XY " << m.pose << ' ' << m.landmark;
      append(os, m.l(0));
      append(os, m.l(1));
      append(os, m.tau);
      append(os, 0.0);
      append(os, m.tau);
    }
    os << '\n';
  }
  return os.str();
}

std::pair<Problem, InjectionReport> inject_outliers(const Problem &problem,
                                                    double beta,
                                                    std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("inject_outliers: rate must lie in [0, 1]");
  const int d = problem.d;
  InjectionReport report;
  report.rate = beta;
  report.seed = seed;
  std::vector<std::size_t> eligible = problem.robust_edge_indices();
  report.eligible = eligible.size();
  const auto count = static_cast<std::size_t>(
      std::floor(beta * static_cast<double>(eligible.size()) + 0.5));

  Problem out = problem;
  if (count == 0)
    return {std::move(out), std::move(report)};

  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());
  report.replaced = eligible;

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double radius = problem.scene_scale > 0 ? problem.scene_scale : 1.0;
  auto ball = [&]() {
    Vector v(d);
    for (int k = 0; k < d; ++k)
      v(k) = normal(rng);
    v.normalize();
    return Vector(v * radius * std::pow(uniform(rng), 1.0 / d));
  };
  auto rotation = [&]() -> Matrix {
    if (d == 2)
      return rotation_2d(std::numbers::pi * (2.0 * uniform(rng) - 1.0));
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k)
      q(k) = normal(rng);
    q.normalize();
    return quaternion_to_rotation(q(0), q(1), q(2), q(3));
  };

  for (std::size_t k : eligible) {
    MeasurementEdge &e = out.edges[k];
    InjectedEdge rec{k, e, e};
    if (e.is_relative_pose()) {
      auto m = e.relative_pose();
      m.R = rotation();
      m.t = ball();
      e.measurement = m;
    } else {
      auto m = e.pose_landmark();
      m.l = ball();
      e.measurement = m;
    }
    rec.corrupted = e;
    report.edges.push_back(std::move(rec));
  }
  return {std::move(out), std::move(report)};
}

std::string apply_injection(const G2oDocument &doc, const Problem &corrupted,
                            const InjectionReport &report,
                            const std::string &provenance) {
  std::vector<std::string> lines = doc.lines;
  const int d = doc.problem.d;
  for (std::size_t k : report.replaced) {
    const std::size_t li = doc.edge_lines.at(k);
    const auto tokens = tokenize(lines[li]);
    const MeasurementEdge &e = corrupted.edges[k];
    const std::size_t fields =
        e.is_relative_pose() ? (d == 2 ? 3 : 7) : static_cast<std::size_t>(d);
    std::string rebuilt(tokens[0].text);
    rebuilt += ' ';
    rebuilt += tokens[1].text;
    rebuilt += ' ';
    rebuilt += tokens[2].text;
    rebuilt += ' ' + measurement_tokens(d, e);
    for (std::size_t t = 3 + fields; t < tokens.size(); ++t) {
      rebuilt += ' ';
      rebuilt += tokens[t].text;
    }
    lines[li] = std::move(rebuilt);
  }
  std::string out = "# " + provenance + "\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (i + 1 < lines.size())
      out += '\n';
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (d != 2 && d != 3)
    throw std::invalid_argument("SyntheticSpec: d must be 2 or 3");
  if (poses < 2)
    throw std::invalid_argument("SyntheticSpec: need at least 2 poses");
  if (!(sigma_r >= 0.0) || !(sigma_t >= 0.0))
    throw std::invalid_argument("SyntheticSpec: noise levels must be >= 0");
  if (!(lc_prob >= 0.0 && lc_prob <= 1.0))
    throw std::invalid_argument("SyntheticSpec: lc_prob must lie in [0, 1]");
  if (!(lc_distance >= 0.0))
    throw std::invalid_argument("SyntheticSpec: lc_distance must be >= 0");
  if (landmarks < 0)
    throw std::invalid_argument("SyntheticSpec: landmark count must be >= 0");
  if (landmarks > 0 && d != 2)
    throw std::invalid_argument("SyntheticSpec: landmarks are only supported in 2D");
  if (!(observation_radius > 0.0))
    throw std::invalid_argument("SyntheticSpec: observation radius must be positive");
}

namespace {

Matrix rotation_z(int d, double yaw) {
  if (d == 2)
    return rotation_2d(yaw);
  return axis_angle_to_rotation(Eigen::Vector3d::UnitZ(), yaw);
}

std::vector<Pose> trajectory(const SyntheticSpec &spec) {
  const int n = spec.poses, d = spec.d;
  std::vector<Pose> out(static_cast<std::size_t>(n));
  if (spec.world == World::Ring) {
    const int per_lap = n >= 6 ? (n + 1) / 2 : n;
    const double step = 2.0 * std::numbers::pi / per_lap;
    const double radius = 1.0 / (2.0 * std::sin(step / 2.0));
    for (int k = 0; k < n; ++k) {
      const double phi = step * k;
      Pose &p = out[static_cast<std::size_t>(k)];
      p.t = Vector::Zero(d);
      p.t(0) = radius * std::cos(phi);
      p.t(1) = radius * std::sin(phi);
      p.R = rotation_z(d, phi + std::numbers::pi / 2);
      if (d == 3) {
        p.t(2) = 0.3 * std::sin(2.0 * phi);
        p.R = p.R * axis_angle_to_rotation(Eigen::Vector3d::UnitX(),
                                           0.1 * std::sin(phi));
      }
    }
    return out;
  }
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<Vector> pts;
  for (int k = 0; k < n; ++k) {
    const int row = k / cols, col = k % cols;
    Vector t = Vector::Zero(d);
    t(0) = row % 2 == 0 ? col : cols - 1 - col;
    t(1) = row;
    pts.push_back(t);
  }
  double yaw = 0.0;
  for (int k = 0; k < n; ++k) {
    if (k + 1 < n) {
      const Vector delta = pts[static_cast<std::size_t>(k + 1)] - pts[static_cast<std::size_t>(k)];
      yaw = std::atan2(delta(1), delta(0));
    }
    out[static_cast<std::size_t>(k)] = {rotation_z(d, yaw), pts[static_cast<std::size_t>(k)]};
  }
  return out;
}

} // namespace

Problem generate_synthetic(const SyntheticSpec &spec, std::uint64_t seed) {
  spec.validate();
  const int d = spec.d, n = spec.poses;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::vector<Pose> gt = trajectory(spec);
  const double kappa = spec.sigma_r > 0 ? 1.0 / (spec.sigma_r * spec.sigma_r) : 1.0;
  const double tau = spec.sigma_t > 0 ? 1.0 / (spec.sigma_t * spec.sigma_t) : 1.0;

  auto rotation_noise = [&]() -> Matrix {
    const double angle = spec.sigma_r * normal(rng);
    if (d == 2)
      return rotation_2d(angle);
    Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();
    return axis_angle_to_rotation(axis, angle);
  };
  auto translation_noise = [&]() {
    Vector v(d);
    for (int k = 0; k < d; ++k)
      v(k) = spec.sigma_t * normal(rng);
    return v;
  };
  auto relative = [&](int i, int j) {
    const Pose &a = gt[static_cast<std::size_t>(i)], &b = gt[static_cast<std::size_t>(j)];
    RelativePoseMeasurement m;
    m.i = i;
    m.j = j;
    m.R = a.R.transpose() * b.R * rotation_noise();
    m.t = a.R.transpose() * (b.t - a.t) + translation_noise();
    m.kappa = kappa;
    m.tau = tau;
    return m;
  };

  Problem problem;
  problem.d = d;
  problem.source = "synthetic";
  Estimate truth;
  truth.d = d;
  for (int k = 0; k < n; ++k)
    truth.poses[k] = gt[static_cast<std::size_t>(k)];

  for (int k = 0; k + 1 < n; ++k)
    problem.edges.push_back({relative(k, k + 1), EdgeClass::Odometry});
  const bool ring = spec.world == World::Ring && n >= 3;
  if (ring)
    problem.edges.push_back({relative(n - 1, 0), EdgeClass::Odometry});

  for (int i = 0; i < n; ++i)
    for (int j = i + 2; j < n; ++j) {
      if (ring && i == 0 && j == n - 1)
        continue;
      const double dist = (gt[static_cast<std::size_t>(i)].t - gt[static_cast<std::size_t>(j)].t).norm();
      if (dist > spec.lc_distance)
        continue;
      if (uniform(rng) < spec.lc_prob)
        problem.edges.push_back({relative(i, j), EdgeClass::LoopClosure});
    }

  if (spec.landmarks > 0) {
    Vector lo = gt[0].t, hi = gt[0].t;
    for (const auto &p : gt) {
      lo = lo.cwiseMin(p.t);
      hi = hi.cwiseMax(p.t);
    }
    lo.array() -= 1.0;
    hi.array() += 1.0;
    std::vector<Vector> marks;
    for (int m = 0; m < spec.landmarks; ++m) {
      Vector l(d);
      for (int k = 0; k < d; ++k)
        l(k) = lo(k) + (hi(k) - lo(k)) * uniform(rng);
      marks.push_back(l);
      truth.landmarks[n + m] = l;
    }
    auto observe = [&](int i, int m) {
      const Pose &p = gt[static_cast<std::size_t>(i)];
      PoseLandmarkMeasurement obs;
      obs.pose = i;
      obs.landmark = n + m;
      obs.l = p.R.transpose() * (marks[static_cast<std::size_t>(m)] - p.t) +
              translation_noise();
      obs.tau = tau;
      problem.edges.push_back({obs, EdgeClass::PoseLandmark});
    };
    std::vector<int> seen(static_cast<std::size_t>(spec.landmarks), 0);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < spec.landmarks; ++m)
        if ((gt[static_cast<std::size_t>(i)].t - marks[static_cast<std::size_t>(m)]).norm() <=
            spec.observation_radius) {
          observe(i, m);
          ++seen[static_cast<std::size_t>(m)];
        }
    for (int m = 0; m < spec.landmarks; ++m) {
      if (seen[static_cast<std::size_t>(m)])
        continue;
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        const double dist = (gt[static_cast<std::size_t>(i)].t - marks[static_cast<std::size_t>(m)]).norm();
        if (dist < best) {
          best = dist;
          nearest = i;
        }
      }
      observe(nearest, m);
    }
  }

  // Vertex values start as identity so that odometry composition below has
  // something to index; they are replaced right after.
  for (int k = 0; k < n; ++k)
    problem.poses[k] = {Matrix::Identity(d, d), Vector::Zero(d)};
  for (const auto &[id, l] : truth.landmarks)
    problem.landmarks[id] = Vector::Zero(d);
  const Estimate init = odometry_initialization(problem);
  problem.poses = init.poses;
  problem.landmarks = init.landmarks;
  problem.ground_truth = std::move(truth);
  problem.validate();
  problem.scene_scale = compute_scene_scale(problem);
  return problem;
}

AteResult rmse_ate(const Estimate &estimate, const Estimate &ground_truth) {
  if (estimate.d != ground_truth.d)
    throw LayoutMismatchError("rmse_ate: dimension mismatch");
  const int d = ground_truth.d;
  auto same_keys = [](const auto &a, const auto &b) {
    if (a.size() != b.size())
      return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
      if (ia->first != ib->first)
        return false;
    return true;
  };
  if (!same_keys(estimate.poses, ground_truth.poses) ||
      !same_keys(estimate.landmarks, ground_truth.landmarks))
    throw LayoutMismatchError("rmse_ate: estimate and ground truth ids differ");

  std::vector<Vector> src, dst;
  for (const auto &[id, p] : estimate.poses) {
    src.push_back(p.t);
    dst.push_back(ground_truth.poses.at(id).t);
  }
  for (const auto &[id, l] : estimate.landmarks) {
    src.push_back(l);
    dst.push_back(ground_truth.landmarks.at(id));
  }
  const auto count = static_cast<double>(src.size());
  if (src.size() < static_cast<std::size_t>(d + 1))
    throw DegenerateInputError("rmse_ate: need at least d + 1 points");

  Vector mu_src = Vector::Zero(d), mu_dst = Vector::Zero(d);
  for (std::size_t k = 0; k < src.size(); ++k) {
    mu_src += src[k];
    mu_dst += dst[k];
  }
  mu_src /= count;
  mu_dst /= count;
  Matrix cov = Matrix::Zero(d, d);
  Matrix centred(d, static_cast<Eigen::Index>(src.size()));
  for (std::size_t k = 0; k < src.size(); ++k) {
    cov += (dst[k] - mu_dst) * (src[k] - mu_src).transpose();
    centred.col(static_cast<Eigen::Index>(k)) = src[k] - mu_src;
  }
  Eigen::JacobiSVD<Matrix> spread(centred);
  const double s0 = spread.singularValues()(0);
  int rank = 0;
  for (Eigen::Index k = 0; k < spread.singularValues().size(); ++k)
    if (spread.singularValues()(k) > 1e-9 * std::max(1.0, s0))
      ++rank;
  if (rank < d - 1)
    throw DegenerateInputError("rmse_ate: points are degenerate for alignment");

  Eigen::JacobiSVD<Matrix> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix S = Matrix::Identity(d, d);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    S(d - 1, d - 1) = -1.0;
  AteResult out;
  out.R_align = svd.matrixU() * S * svd.matrixV().transpose();
  out.t_align = mu_dst - out.R_align * mu_src;

  double sq = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k)
    sq += (out.R_align * src[k] + out.t_align - dst[k]).squaredNorm();
  out.translation_rmse = std::sqrt(sq / count);

  double rot = 0.0;
  for (const auto &[id, p] : estimate.poses) {
    const double deg = rotation_angle_between(out.R_align * p.R,
                                              ground_truth.poses.at(id).R) *
                       180.0 / std::numbers::pi;
    rot += deg * deg;
  }
  out.rotation_rmse_deg =
      estimate.poses.empty() ? 0.0 : std::sqrt(rot / estimate.poses.size());
  return out;
}

std::string write_ground_truth(const Estimate &gt) {
  std::ostringstream os;
  os << "# d=" << gt.d << '\n';
  for (const auto &[id, p] : gt.poses) {
    os << id;
    for (int k = 0; k < gt.d; ++k)
      append(os, p.t(k));
    if (gt.d == 2) {
      append(os, exact_angle(p.R));
    } else {
      const Eigen::Vector4d q = exact_quaternion(p.R);
      for (int k = 0; k < 4; ++k)
        append(os, q(k));
    }
    os << '\n';
  }
  for (const auto &[id, l] : gt.landmarks) {
    os << "L " << id;
    for (int k = 0; k < gt.d; ++k)
      append(os, l(k));
    os << '\n';
  }
  return os.str();
}

Estimate read_ground_truth(const std::string &text, int d) {
  if (d != 2 && d != 3)
    throw std::invalid_argument("read_ground_truth: d must be 2 or 3");
  Estimate est;
  est.d = d;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    auto tokens = tokenize(lines[li]);
    if (tokens.empty() || tokens[0].text.front() == '#')
      continue;
    LineParser lp(static_cast<int>(li) + 1, std::move(tokens));
    const auto &tok = lp.tokens();
    if (tok[0].text == "L") {
      if (static_cast<int>(tok.size()) != d + 2)
        lp.fail(0, "landmark row expects " + std::to_string(d + 1) + " fields");
      Vector l(d);
      for (int k = 0; k < d; ++k)
        l(k) = lp.number(static_cast<std::size_t>(2 + k));
      est.landmarks[lp.id(1)] = l;
      continue;
    }
    const std::size_t expected = d == 2 ? 4 : 8;
    if (tok.size() != expected)
      lp.fail(0, "pose row expects " + std::to_string(expected) + " fields");
    Pose p;
    p.t = Vector(d);
    for (int k = 0; k < d; ++k)
      p.t(k) = lp.number(static_cast<std::size_t>(1 + k));
    p.R = d == 2 ? rotation_2d(lp.number(3)) : lp.quaternion(4);
    est.poses[lp.id(0)] = std::move(p);
  }
  return est;
}

Estimate vertices_of(const Problem &problem) {
  Estimate est;
  est.d = problem.d;
  est.poses = problem.poses;
  est.landmarks = problem.landmarks;
  return est;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out)
    throw std::runtime_error("write to '" + path + "' failed");
}

} // namespace certignc
