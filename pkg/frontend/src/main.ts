import { ArenaClient } from "./api.js";
import { ArenaApp } from "./ui.js";

// One session per tab. The backend address comes from ?api=...; same-origin
// by default (the server can mount the built UI directly).
const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const agent = params.get("agent") ?? "random";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const app = new ArenaApp(new ArenaClient(base), root);
void app.start(agent);
window.addEventListener("beforeunload", () => app.dispose());
