// studio: HTTP inference service for the sketch studio.
#include <csignal>
#include <iostream>

#include "sketchlab/service.hpp"
#include "tool_main.hpp"

using namespace sketchlab;

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch studio inference service", "studio"};
  app.require_subcommand(1);
  fs::path registry;
  int port = kDefaultStudioPort;
  std::string host = "0.0.0.0";
  std::optional<std::size_t> queue_depth;
  auto* serve = app.add_subcommand("serve", "Load the registry and serve the HTTP API");
  serve->add_option("--registry", registry, "Registry JSON")->required();
  serve->add_option("--port", port, "Listen port (STUDIO_PORT overrides)")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--queue-depth", queue_depth, "Per-model queue depth (overrides registry)");

  return tools::guarded_main(app, argc, argv, [&] {
    RegistryConfig cfg = load_registry(registry);
    if (queue_depth) {
      if (*queue_depth == 0) throw ConfigError("--queue-depth must be >= 1");
      cfg.queue_depth = *queue_depth;
    }
    const int listen_port = resolve_port(port, std::getenv("STUDIO_PORT"));
    StudioService service(cfg);
    httplib::Server srv;
    service.mount(srv);
    g_server = &srv;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "studio: " << cfg.entries.size() << " model(s), listening on " << host << ':' << listen_port
              << '\n';
    if (!srv.listen(host, listen_port)) throw IoError("cannot listen on " + host + ":" + std::to_string(listen_port));
  });
}
