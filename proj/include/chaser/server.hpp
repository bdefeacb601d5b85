#pragma once

// Interactive mode: the operator drives the target over a websocket while the
// chaser plans against it. One thread runs the simulation in real time, one
// runs the network loop; they meet at a mutex-guarded command slot and at
// posted, already-serialized frames.

#include "chaser/scenario.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

namespace chaser {

/// Simulation driven by a planar velocity command instead of a script.
class InteractiveSession {
 public:
  /// `free_margin`: the target never steps to a point with phi below this.
  explicit InteractiveSession(const Scenario& scenario, double free_margin = 0.3)
      : scenario_(scenario), free_margin_(free_margin) {
    reset();
  }

  void reset() {
    const auto& c = scenario_.config;
    mission_ = std::make_unique<Mission>(scenario_.esdf, c.via_points, c.script.start, c.chaser_start, c.planner);
    command_ = Vec3::Zero();
    psi_sum_ = 0.0;
    occluded_ = 0;
    distance_ = 0.0;
    replans_ = 0;
    replanning_ = false;
    infeasible_ = false;
  }

  /// Velocity for the following steps (m/s, horizontal).
  void command(double vx, double vy) { command_ = Vec3(vx, vy, 0.0); }

  void step() {
    const Vec3 next = clamp_step(mission_->state().target_pos, command_ * mission_->config().mission.tick_dt);
    mission_->tick(next);
    const TickRecord& r = mission_->log().records.back();
    psi_sum_ += r.psi;
    occluded_ += r.visible ? 0 : 1;
    distance_ += r.step;
    replans_ += r.replanned ? 1 : 0;
    replanning_ = r.replanned;
    infeasible_ = mission_->state().plan_failed;
  }

  const Mission& mission() const { return *mission_; }
  const Vec3& command_velocity() const { return command_; }

  nlohmann::json frame() const {
    using nlohmann::json;
    auto v = [](const Vec3& p) { return json::array({p.x(), p.y(), p.z()}); };
    const WorldState& s = mission_->state();
    const auto& log = mission_->log();
    json f;
    f["type"] = "frame";
    f["t"] = s.t;
    f["target_pos"] = v(s.target_pos);
    f["chaser_pos"] = v(s.chaser.position);
    f["yaw"] = s.yaw;
    f["target_vel"] = json::array({command_.x(), command_.y()});
    f["via_index"] = s.active_via_index;
    json prediction = json::array(), skeleton = json::array(), corridors = json::array();
    if (s.current_prediction) {
      for (const Vec3& p : s.current_prediction->xi) prediction.push_back(v(p));
    }
    if (const auto& plan = mission_->last_plan(); plan && plan->preplan) {
      for (const Vec3& p : plan->preplan->skeleton.points) skeleton.push_back(v(p));
      for (const Corridor& c : plan->preplan->corridors) {
        json box = json::array();
        for (const Vec3& p : c.corners()) box.push_back(v(p));
        corridors.push_back(box);
      }
    }
    f["prediction"] = prediction;
    f["skeleton"] = skeleton;
    f["corridors"] = corridors;
    const bool visible = log.records.empty() ? true : log.records.back().visible;
    f["flags"] = {{"visible", visible}, {"replanning", replanning_}, {"infeasible", infeasible_}};
    const int n = static_cast<int>(log.records.size());
    const double dt = mission_->config().mission.tick_dt;
    f["metrics"] = {{"avg_psi", n ? psi_sum_ / n : 0.0},
                    {"occlusion_duration", dt * occluded_},
                    {"flight_distance", distance_},
                    {"ticks", n},
                    {"replans", replans_}};
    return f;
  }

 private:
  // Moves by `delta` if the destination is free; otherwise slides along
  // whichever axis is free, else stays.
  Vec3 clamp_step(const Vec3& from, const Vec3& delta) const {
    auto ok = [&](const Vec3& p) {
      return scenario_.esdf.grid().contains(p) && scenario_.esdf.phi_at(p) >= free_margin_;
    };
    if (delta.squaredNorm() == 0.0) return from;
    if (ok(from + delta)) return from + delta;
    const Vec3 dx(delta.x(), 0, 0), dy(0, delta.y(), 0);
    if (dx.squaredNorm() > 0 && ok(from + dx)) return from + dx;
    if (dy.squaredNorm() > 0 && ok(from + dy)) return from + dy;
    return from;
  }

  const Scenario& scenario_;
  double free_margin_;
  std::unique_ptr<Mission> mission_;
  Vec3 command_ = Vec3::Zero();
  double psi_sum_ = 0.0;
  int occluded_ = 0;
  double distance_ = 0.0;
  int replans_ = 0;
  bool replanning_ = false;
  bool infeasible_ = false;
};

struct ClientMessage {
  enum class Kind { kCmd, kReset } kind = Kind::kCmd;
  double vx = 0.0;
  double vy = 0.0;
};

/// Parses one client message; nullopt for anything that is not a well-formed
/// cmd or reset. Unknown fields are ignored.
inline std::optional<ClientMessage> parse_client_message(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) return std::nullopt;
  const auto type = j["type"].get<std::string>();
  ClientMessage m;
  if (type == "reset") {
    m.kind = ClientMessage::Kind::kReset;
    return m;
  }
  if (type != "cmd") return std::nullopt;
  if (!j.contains("vx") || !j.contains("vy") || !j["vx"].is_number() || !j["vy"].is_number()) return std::nullopt;
  m.vx = j["vx"].get<double>();
  m.vy = j["vy"].get<double>();
  if (!std::isfinite(m.vx) || !std::isfinite(m.vy)) return std::nullopt;
  return m;
}

namespace detail {

namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

class WsPeer : public std::enable_shared_from_this<WsPeer> {
 public:
  using Handler = std::function<void(const std::string&)>;
  WsPeer(tcp::socket socket, Handler on_message) : ws_(std::move(socket)), on_message_(std::move(on_message)) {}

  template <typename OnOpen>
  void start(OnOpen on_open) {
    ws_.async_accept([self = shared_from_this(), on_open](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      on_open(self);
      self->read();
    });
  }

  bool open() const { return open_; }

  // Latest wins: at most one frame waits behind the one being written.
  void send(std::shared_ptr<const std::string> msg) {
    if (!open_) return;
    if (writing_) {
      pending_ = std::move(msg);
      return;
    }
    write(std::move(msg));
  }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      self->on_message_(beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write(std::shared_ptr<const std::string> msg) {
    writing_ = true;
    current_ = std::move(msg);
    ws_.text(true);
    ws_.async_write(boost::asio::buffer(*current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) {
        self->open_ = false;
        return;
      }
      if (self->pending_) self->write(std::exchange(self->pending_, nullptr));
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  Handler on_message_;
  std::shared_ptr<const std::string> current_, pending_;
  bool open_ = false;
  bool writing_ = false;
};

}  // namespace detail

/// Websocket server for operator_ui. Frames go out at most every
/// `min_frame_interval` regardless of the tick rate.
class UiServer {
 public:
  UiServer(const Scenario& scenario, unsigned short port, const std::string& address = "127.0.0.1",
           std::chrono::milliseconds min_frame_interval = std::chrono::milliseconds(50))
      : session_(scenario),
        acceptor_(ioc_, {boost::asio::ip::make_address(address), port}),
        frame_interval_(min_frame_interval) {}

  ~UiServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { simulate(); });
  }

  /// Blocks until stop() is called from another thread (or a signal handler).
  void run() {
    start();
    std::unique_lock lock(wait_mutex_);
    wait_cv_.wait(lock, [this] { return stopping_.load(); });
  }

  void stop() {
    {
      std::lock_guard lock(wait_mutex_);
      if (stopping_.exchange(true) && !io_thread_.joinable()) return;
    }
    wait_cv_.notify_all();
    if (sim_thread_.joinable()) sim_thread_.join();
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for (auto& p : peers_) p->close();
      peers_.clear();
    });
    work_.reset();
    if (io_thread_.joinable()) io_thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, detail::tcp::socket socket) {
      if (ec) return;
      auto peer = std::make_shared<detail::WsPeer>(std::move(socket), [this](const std::string& m) { receive(m); });
      peer->start([this](const std::shared_ptr<detail::WsPeer>& p) {
        std::erase_if(peers_, [](const auto& q) { return !q->open(); });
        peers_.push_back(p);
        if (last_frame_) p->send(last_frame_);
      });
      accept();
    });
  }

  // network thread
  void receive(const std::string& text) {
    const auto m = parse_client_message(text);
    if (!m) return;
    std::lock_guard lock(input_mutex_);
    if (m->kind == ClientMessage::Kind::kReset) {
      reset_requested_ = true;
    } else {
      pending_command_ = Eigen::Vector2d(m->vx, m->vy);
    }
  }

  void broadcast(std::shared_ptr<const std::string> frame) {
    last_frame_ = frame;
    std::erase_if(peers_, [](const auto& q) { return !q->open(); });
    for (auto& p : peers_) p->send(frame);
  }

  // simulation thread
  void simulate() {
    using clock = std::chrono::steady_clock;
    const auto dt = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(session_.mission().config().mission.tick_dt));
    auto next_tick = clock::now();
    auto last_frame = clock::now() - frame_interval_;
    while (!stopping_) {
      {
        std::lock_guard lock(input_mutex_);
        if (reset_requested_) {
          session_.reset();
          reset_requested_ = false;
        }
        if (pending_command_) session_.command(pending_command_->x(), pending_command_->y());
        pending_command_.reset();
      }
      if (!session_.mission().state().completed) session_.step();
      const auto now = clock::now();
      if (now - last_frame >= frame_interval_) {
        last_frame = now;
        auto frame = std::make_shared<const std::string>(session_.frame().dump());
        boost::asio::post(ioc_, [this, frame] { broadcast(frame); });
      }
      // real time, but never try to catch up with a burst of ticks
      next_tick = std::max(next_tick + dt, clock::now());
      std::unique_lock lock(wait_mutex_);
      wait_cv_.wait_until(lock, next_tick, [this] { return stopping_.load(); });
    }
  }

  InteractiveSession session_;
  boost::asio::io_context ioc_;
  std::optional<boost::asio::executor_work_guard<boost::asio::io_context::executor_type>> work_{
      boost::asio::make_work_guard(ioc_)};
  detail::tcp::acceptor acceptor_;
  std::chrono::milliseconds frame_interval_;
  std::vector<std::shared_ptr<detail::WsPeer>> peers_;  // network thread only
  std::shared_ptr<const std::string> last_frame_;       // network thread only
  std::mutex input_mutex_;
  std::optional<Eigen::Vector2d> pending_command_;
  bool reset_requested_ = false;
  std::mutex wait_mutex_;
  std::condition_variable wait_cv_;
  std::atomic<bool> stopping_{false};
  std::thread io_thread_, sim_thread_;
};

}  // namespace chaser
