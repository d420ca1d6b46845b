//! Draws a random layout, plans a right-angle demonstration through it and
//! replays the actions in the simulator, then runs a constant push on one of
//! the downstream mazes.
//!
//! `cargo run --release --example maze_demos -- [layout_seed] [maze]`

use skill_critic::env::{
    bfs_path, emit_actions, generate_layout, make_downstream_maze, maze_step, Cell, MazeSpec, PlannerConfig,
};

/// ASCII picture of `spec` with the visited cells marked.
fn draw(spec: &MazeSpec, visited: &[(usize, usize)]) -> String {
    let mut out = String::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let here = |p: [f64; 2]| spec.cell_of(p) == Some((r, c));
            let ch = if here(spec.start) {
                'S'
            } else if here(spec.goal) {
                'G'
            } else if spec.cell(r, c) == Cell::Wall {
                '#'
            } else if visited.contains(&(r, c)) {
                '*'
            } else {
                '.'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let layout_seed: u64 = args.next().map_or(Ok(3), |s| s.parse())?;
    let maze = args.next().unwrap_or_else(|| "diagonal".to_string());

    let cfg = PlannerConfig::default();
    let spec = generate_layout(layout_seed, &cfg)?;
    let from = spec.cell_of(spec.start).expect("start inside the grid");
    let to = spec.cell_of(spec.goal).expect("goal inside the grid");
    let path = bfs_path(&spec, from, to).expect("layouts are solvable");
    let actions = emit_actions(&spec, &path, cfg.speed)?;

    let mut state = spec.initial_state(spec.start);
    let mut visited = Vec::new();
    let mut contacts = 0;
    for a in &actions {
        let step = maze_step(&spec, &state, *a)?;
        contacts += usize::from(step.wall_contact);
        state = step.state;
        visited.extend(spec.cell_of(state.pos));
    }
    println!("layout {} ({} cells on the shortest path)", spec.id, path.len());
    print!("{}", draw(&spec, &visited));
    println!(
        "{} actions, {} wall contacts, final distance to goal {:.3}\n",
        actions.len(),
        contacts,
        spec.goal_distance(state.pos)
    );

    let down = make_downstream_maze(&maze)?;
    let mut state = down.initial_state(down.start);
    let mut visited = Vec::new();
    let mut contacts = 0;
    for _ in 0..down.episode_length {
        let step = maze_step(&down, &state, [1.0, 1.0])?;
        contacts += usize::from(step.wall_contact);
        state = step.state;
        visited.extend(down.cell_of(state.pos));
    }
    println!("{maze}: constant [1, 1] push for {} steps", down.episode_length);
    print!("{}", draw(&down, &visited));
    println!("{contacts} wall contacts, final distance to goal {:.3}", down.goal_distance(state.pos));
    Ok(())
}
