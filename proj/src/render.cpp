#include "sdp/render.hpp"

#include <cstdio>

namespace sdp {

namespace {

void csv_row(std::string& out, int t, const State& s, const Action& a, int c,
             const EnvConfig& env, const SafeSetSpec& spec) {
  const JointState js = decode_joint(s);
  const Vec2 ee = forward_kinematics(js, env);
  const Vec2 tg = s.target();
  char line[320];
  std::snprintf(line, sizeof line,
                "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%.9g\n",
                t, js.alpha1, js.alpha2, js.dalpha1, js.dalpha2, ee.x, ee.y, tg.x,
                tg.y, a.torque1, a.torque2, reward(s, env), c, barrier(s, spec, env));
  out += line;
}

}  // namespace

std::string episode_csv(const EpisodeLog& log, const EnvConfig& env,
                        const SafeSetSpec& spec) {
  std::string out =
      "t,alpha1,alpha2,dalpha1,dalpha2,x_ee,y_ee,x_tg,y_tg,a1,a2,r,c,h\n";
  for (const auto& sl : log.step_logs)
    csv_row(out, sl.t, sl.transition.s, sl.action, sl.transition.c, env, spec);
  if (!log.step_logs.empty()) {
    const auto& last = log.step_logs.back();
    csv_row(out, last.t + 1, last.transition.s_next, Action{}, 0, env, spec);
  } else {
    csv_row(out, 0, log.s0, Action{}, 0, env, spec);
  }
  return out;
}

std::string svg_snapshot(const State& s, const EnvConfig& env,
                         const SafeSetSpec& spec) {
  const JointState js = decode_joint(s);
  const Vec2 elbow{env.l1 * std::cos(js.alpha1), env.l1 * std::sin(js.alpha1)};
  const Vec2 ee = forward_kinematics(js, env);
  const Vec2 tg = s.target();
  const double reach = env.l1 + env.l2;

  // World [-reach-0.1, reach+0.1]^2 mapped to a 400x400 viewport, y up.
  const double span = 2.0 * (reach + 0.1);
  const double scale = 400.0 / span;
  auto X = [&](double x) { return (x + reach + 0.1) * scale; };
  auto Y = [&](double y) { return 400.0 - (y + reach + 0.1) * scale; };

  std::string out;
  char buf[512];
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" "
         "viewBox=\"0 0 400 400\">\n";
  out += "<rect width=\"400\" height=\"400\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" "
                "stroke=\"#cccccc\" stroke-dasharray=\"4 4\"/>\n",
                X(0), Y(0), reach * scale);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#ff000040\" "
                "stroke=\"red\"/>\n",
                X(spec.center_x), Y(spec.center_y), spec.radius * scale);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                "stroke=\"black\" stroke-width=\"4\"/>\n",
                X(0), Y(0), X(elbow.x), Y(elbow.y));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                "stroke=\"black\" stroke-width=\"4\"/>\n",
                X(elbow.x), Y(elbow.y), X(ee.x), Y(ee.y));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\" fill=\"#444444\"/>\n", X(0),
                Y(0));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#444444\"/>\n",
                X(elbow.x), Y(elbow.y));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"6\" fill=\"green\"/>\n", X(ee.x),
                Y(ee.y));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"6\" fill=\"blue\"/>\n", X(tg.x),
                Y(tg.y));
  out += buf;
  out += "</svg>\n";
  return out;
}

}  // namespace sdp
