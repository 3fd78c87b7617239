import { App } from "./app";

// The bundle is inlined into index.html by the build; the service serves the
// page, so the API base is the page origin.
function boot(): void {
  const el = document.getElementById("app");
  if (!el) return;
  const app = new App(el, {});
  void app.init();
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
