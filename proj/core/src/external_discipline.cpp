#include <mdots/external_discipline.hpp>

#include <nlohmann/json.hpp>

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <limits>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace mdots::problems {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// One child process connected through a socket pair bound to its stdin and
// stdout. Writes use MSG_NOSIGNAL so a dead child never raises SIGPIPE here.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw std::runtime_error(std::string("socketpair: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw std::runtime_error(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      // Own process group, so a reset also reaches anything the shell spawned.
      ::setpgid(0, 0);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid, pid);  // also from the parent, to win the race with exec
    ::close(fds[1]);
    fd_ = fds[0];
    pid_ = pid;
    group_ = pid;
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (fd_ >= 0) ::close(fd_);
    ::kill(-group_, SIGKILL);
    if (pid_ > 0) ::waitpid(pid_, nullptr, 0);
  }

  // Empty optional + `error` set on failure.
  std::optional<std::string> exchange(const std::string& line, double timeout_seconds,
                                      std::string& error) {
    std::string payload = line + "\n";
    std::size_t sent = 0;
    while (sent < payload.size()) {
      const ssize_t n = ::send(fd_, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        error = "crash: write to child failed (" + std::string(std::strerror(errno)) + ")";
        return std::nullopt;
      }
      sent += static_cast<std::size_t>(n);
    }

    const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_seconds);
    while (true) {
      const auto newline = buffer_.find('\n');
      if (newline != std::string::npos) {
        std::string response = buffer_.substr(0, newline);
        buffer_.erase(0, newline + 1);
        return response;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (remaining <= 0) {
        error = "timeout: no response within " + std::to_string(timeout_seconds) + " s";
        return std::nullopt;
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
      if (ready < 0) {
        if (errno == EINTR) continue;
        error = "crash: poll failed (" + std::string(std::strerror(errno)) + ")";
        return std::nullopt;
      }
      if (ready == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        error = "crash: read from child failed (" + std::string(std::strerror(errno)) + ")";
        return std::nullopt;
      }
      if (n == 0) {
        error = "crash: child closed its output" + exit_description();
        return std::nullopt;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string exit_description() {
    int status = 0;
    for (int attempt = 0; attempt < 50; ++attempt) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return " (exit status " + std::to_string(WEXITSTATUS(status)) + ")";
        if (WIFSIGNALED(status)) return " (signal " + std::to_string(WTERMSIG(status)) + ")";
        return {};
      }
      ::usleep(2000);
    }
    return {};
  }

  int fd_ = -1;
  pid_t pid_ = -1;
  pid_t group_ = -1;
  std::string buffer_;
};

// Fixed-size pool of lazily started children. A child that failed a call is
// discarded and restarted on next use.
class ProcessPool {
 public:
  explicit ProcessPool(ExternalCommand command)
      : command_(std::move(command)),
        slots_(static_cast<std::size_t>(std::max(1, command_.pool_size))),
        busy_(slots_.size(), false) {}

  mda::DisciplineOutput call(const Vector& z, const Vector& y_in, Eigen::Index expected_outputs) {
    const std::size_t slot = acquire();
    struct Release {
      ProcessPool* pool;
      std::size_t slot;
      ~Release() { pool->release(slot); }
    } release{this, slot};

    const long long id = next_id_.fetch_add(1);
    json request;
    request["id"] = id;
    request["z"] = std::vector<double>(z.data(), z.data() + z.size());
    request["y_in"] = std::vector<double>(y_in.data(), y_in.data() + y_in.size());

    std::unique_ptr<ChildProcess>& child = slots_[slot];
    try {
      if (!child) child = std::make_unique<ChildProcess>(command_.command);
    } catch (const std::exception& e) {
      return mda::DisciplineOutput::failure(std::string("crash: cannot start child: ") + e.what());
    }

    std::string error;
    const auto line = child->exchange(request.dump(), command_.timeout_seconds, error);
    if (!line) {
      child.reset();
      return mda::DisciplineOutput::failure(error);
    }

    json response;
    try {
      response = json::parse(*line);
    } catch (const json::exception& e) {
      child.reset();
      return mda::DisciplineOutput::failure("malformed response: " + std::string(e.what()));
    }
    if (!response.is_object() || !response.contains("id") || !response.contains("status")) {
      child.reset();
      return mda::DisciplineOutput::failure("malformed response: missing id or status");
    }
    if (!response["id"].is_number_integer() || response["id"].get<long long>() != id) {
      child.reset();
      return mda::DisciplineOutput::failure("malformed response: id mismatch");
    }
    const std::string status = response["status"].is_string() ? response["status"].get<std::string>() : "";
    const std::string message =
        response.contains("message") && response["message"].is_string() ? response["message"].get<std::string>() : "";
    if (status == "error") return mda::DisciplineOutput::failure("remote: " + message);
    if (status != "ok") {
      child.reset();
      return mda::DisciplineOutput::failure("malformed response: unknown status '" + status + "'");
    }
    if (!response.contains("y_out") || !response["y_out"].is_array()) {
      return mda::DisciplineOutput::failure("malformed response: missing y_out");
    }
    std::vector<double> values;
    try {
      values = response["y_out"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      return mda::DisciplineOutput::failure("malformed response: y_out is not numeric");
    }
    if (expected_outputs >= 0 && static_cast<Eigen::Index>(values.size()) != expected_outputs) {
      return mda::DisciplineOutput::failure("malformed response: y_out has " +
                                            std::to_string(values.size()) + " entries, expected " +
                                            std::to_string(expected_outputs));
    }
    return mda::DisciplineOutput::success(
        Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }

 private:
  std::size_t acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return std::find(busy_.begin(), busy_.end(), false) != busy_.end(); });
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (!busy_[i]) {
        busy_[i] = true;
        return i;
      }
    }
    return 0;  // unreachable
  }
  void release(std::size_t slot) {
    {
      std::lock_guard lock(mutex_);
      busy_[slot] = false;
    }
    cv_.notify_one();
  }

  ExternalCommand command_;
  std::vector<std::unique_ptr<ChildProcess>> slots_;
  std::vector<bool> busy_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::atomic<long long> next_id_{0};
};

ExternalCommand command_from_json(const json& j) {
  ExternalCommand c;
  c.command = j.at("command").get<std::string>();
  if (j.contains("timeout")) c.timeout_seconds = j["timeout"].get<double>();
  if (j.contains("pool")) c.pool_size = j["pool"].get<int>();
  return c;
}

Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

mda::Discipline external_discipline(std::string name, ExternalCommand command,
                                    std::vector<int> inputs, std::vector<int> outputs) {
  if (command.command.empty()) throw std::invalid_argument("external_discipline: empty command");
  if (!(command.timeout_seconds > 0.0)) throw std::invalid_argument("external_discipline: timeout must be positive");
  const bool concurrent = command.pool_size > 1;
  auto pool = std::make_shared<ProcessPool>(std::move(command));
  const auto n_out = static_cast<Eigen::Index>(outputs.size());
  mda::Discipline d;
  d.name = std::move(name);
  d.inputs = std::move(inputs);
  d.outputs = std::move(outputs);
  d.concurrent_safe = concurrent;
  d.evaluate = [pool, n_out](const Vector& z, const Vector& y_in) { return pool->call(z, y_in, n_out); };
  return d;
}

ObjectiveFunction external_objective(ExternalCommand command) {
  auto pool = std::make_shared<ProcessPool>(std::move(command));
  return [pool](const Vector& z, const Vector& y) {
    const auto out = pool->call(z, y, 1);
    return out.ok ? out.y[0] : std::numeric_limits<double>::quiet_NaN();
  };
}

MdoProblem load_external_problem(const std::filesystem::path& description) {
  std::ifstream in(description);
  if (!in) throw std::runtime_error("cannot open external problem description: " + description.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid external problem description: " + std::string(e.what()));
  }
  try {
    MdoProblem p;
    p.id = j.value("id", std::string("external"));
    p.z_bounds = Box(vector_from_json(j.at("z_lower")), vector_from_json(j.at("z_upper")));
    p.y_bounds = Box(vector_from_json(j.at("y_lower")), vector_from_json(j.at("y_upper")));
    for (const json& dj : j.at("disciplines")) {
      p.disciplines.push_back(external_discipline(dj.value("name", std::string("discipline")),
                                                  command_from_json(dj),
                                                  dj.at("inputs").get<std::vector<int>>(),
                                                  dj.at("outputs").get<std::vector<int>>()));
    }
    p.objective = external_objective(command_from_json(j.at("objective")));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid external problem description: " + std::string(e.what()));
  }
}

}  // namespace mdots::problems
