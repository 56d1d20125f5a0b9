import { HttpTutorService } from "./api.js";
import { render } from "./render.js";
import { ChatController } from "./state.js";

// The only configuration is the service base URL: ?base=http://host:port
// (defaults to same-origin).  ?doc= starts a session immediately and
// ?session= rehydrates an existing one.
const params = new URLSearchParams(window.location.search);
const service = new HttpTutorService(params.get("base") ?? "");
const controller = new ChatController(service);
const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");

function paint(): void {
  render(controller.state, root as HTMLElement);
  const draft = root!.querySelector<HTMLInputElement>("input[name=draft]");
  draft?.focus();
}

root.addEventListener("input", (event) => {
  const target = event.target as HTMLInputElement;
  if (target.name === "draft") controller.setComposing(target.value);
});

root.addEventListener("submit", (event) => {
  event.preventDefault();
  const form = event.target as HTMLFormElement;
  if (form.classList.contains("start-panel")) {
    const doc = new FormData(form).get("doc");
    if (typeof doc === "string" && doc.trim()) {
      void controller.startChat(doc.trim()).then(paint);
      paint();
    }
  } else if (form.classList.contains("composer")) {
    void controller.sendAnswer().then(paint);
    paint();
  }
});

const docId = params.get("doc");
const sessionId = params.get("session");
if (sessionId) {
  void controller.reconnect(sessionId).then(paint);
} else if (docId) {
  void controller.startChat(docId).then(paint);
}
paint();
